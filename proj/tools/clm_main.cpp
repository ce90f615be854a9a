// clm_jpeg: corpus building, byte-LM training, evaluation, and codec tools.
#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clm/anomaly/anomaly.hpp"
#include "clm/cli/run_config.hpp"
#include "clm/corpus/builder.hpp"
#include "clm/eval/evaluation.hpp"
#include "clm/image_io.hpp"
#include "clm/lm/checkpoint.hpp"
#include "clm/lm/decoding.hpp"
#include "clm/lm/training.hpp"

using namespace clm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNegative = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

void apply_thread_cap() {
    if (const char* env = std::getenv("CLM_JPEG_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
}

std::vector<int> parse_qualities(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

struct CorpusFiles {
    std::vector<eval::LabeledFile> files;
    std::uint64_t manifest_hash = 0;
};

CorpusFiles load_corpus_files(const fs::path& corpus_dir, const std::string& split) {
    auto manifest_path = corpus_dir / "manifest.json";
    auto m = corpus::load_manifest(manifest_path);
    CorpusFiles out;
    out.manifest_hash = fnv1a64(read_file(manifest_path));
    for (const auto& e : m.entries) {
        if (!split.empty() && e.split != split) continue;
        eval::LabeledFile f;
        f.bytes = read_file(corpus_dir / e.file_path);
        f.quality = e.quality;
        f.class_label = e.class_label;
        f.source_id = e.file_path;
        out.files.push_back(std::move(f));
    }
    return out;
}

// Variant policy for pretraining: both framings of every file ("both"), or a
// single fixed framing.
std::vector<tok::Sentence> tokenize_corpus(const std::vector<eval::LabeledFile>& files,
                                           const std::string& variant, int context_length) {
    std::vector<tok::Sentence> out;
    for (const auto& f : files) {
        auto add = [&](tok::Variant v) {
            auto s = tok::encode_sentence(f.bytes, f.quality, f.class_label, v, f.source_id);
            if (static_cast<int>(s.token_ids.size()) > context_length)
                throw lm::TrainError("sentence exceeds context_length (" +
                                     std::to_string(s.token_ids.size()) + " tokens): " +
                                     f.source_id);
            out.push_back(std::move(s));
        };
        if (variant == "generation" || variant == "both") add(tok::Variant::generation);
        if (variant == "recognition" || variant == "both") add(tok::Variant::recognition);
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"byte-level language modeling on JPEG streams"};
    app.require_subcommand(1);

    // ---------------- build-corpus ----------------
    auto* cb = app.add_subcommand("build-corpus", "materialize a JPEG corpus with a manifest");
    std::string cb_dataset = "synthetic", cb_qualities = "30,50,60,70,75,80,85,90,92";
    std::string cb_out, cb_split = "train", cb_images, cb_labels;
    int cb_per_class = 10, cb_classes = 10, cb_channels = 1, cb_multiplier = 1;
    std::uint64_t cb_seed = 0;
    cb->add_option("--dataset", cb_dataset, "synthetic|mnist|cifar")->capture_default_str();
    cb->add_option("--qualities", cb_qualities)->capture_default_str();
    cb->add_option("--out", cb_out)->required();
    cb->add_option("--split", cb_split)->capture_default_str();
    cb->add_option("--images", cb_images, "IDX images file (mnist)");
    cb->add_option("--labels", cb_labels, "IDX labels file (mnist)");
    cb->add_option("--per-class", cb_per_class, "synthetic images per class")
        ->capture_default_str();
    cb->add_option("--classes", cb_classes)->capture_default_str();
    cb->add_option("--channels", cb_channels)->capture_default_str();
    cb->add_option("--multiplier", cb_multiplier)->capture_default_str();
    cb->add_option("--seed", cb_seed)->capture_default_str();

    // ---------------- train / finetune ----------------
    auto* tr = app.add_subcommand("train", "pretrain on a corpus");
    auto* ft = app.add_subcommand("finetune", "recognition fine-tune from a checkpoint");
    std::string tr_corpus, tr_out, tr_variant = "both", tr_resume, tr_split = "";
    std::string ft_corpus, ft_checkpoint, ft_out, ft_target, ft_split = "";
    lm::ModelConfig mc;
    mc.context_length = 1024;
    mc.layers = 2;
    mc.model_dim = 64;
    mc.heads = 4;
    lm::TrainHyperparams hp;
    hp.epochs = 6;
    for (auto* cmd : {tr, ft}) {
        cmd->add_option("--lr", hp.learning_rate)->capture_default_str();
        cmd->add_option("--epochs", hp.epochs)->capture_default_str();
        cmd->add_option("--batch-size", hp.batch_size)->capture_default_str();
        cmd->add_option("--warmup", hp.warmup_iterations)->capture_default_str();
        cmd->add_option("--grad-clip", hp.grad_clip)->capture_default_str();
        cmd->add_option("--seed", hp.seed)->capture_default_str();
    }
    tr->add_option("--corpus", tr_corpus)->required();
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--split", tr_split, "train on this split only (default: all)");
    tr->add_option("--variant", tr_variant, "generation|recognition|both")->capture_default_str();
    tr->add_option("--resume", tr_resume, "checkpoint to continue from");
    tr->add_option("--layers", mc.layers)->capture_default_str();
    tr->add_option("--dim", mc.model_dim)->capture_default_str();
    tr->add_option("--heads", mc.heads)->capture_default_str();
    tr->add_option("--context", mc.context_length)->capture_default_str();
    tr->add_option("--dropout", mc.dropout)->capture_default_str();
    ft->add_option("--corpus", ft_corpus)->required();
    ft->add_option("--checkpoint", ft_checkpoint)->required();
    ft->add_option("--out", ft_out)->required();
    ft->add_option("--target", ft_target, "quality|class")->required();
    ft->add_option("--split", ft_split);

    // ---------------- eval ----------------
    auto* ev = app.add_subcommand("eval", "evaluation tasks");
    ev->require_subcommand(1);
    auto* evr = ev->add_subcommand("recognize", "two-token property prediction");
    auto* eva = ev->add_subcommand("anomaly", "tagging, detection, correction");
    auto* evg = ev->add_subcommand("generate", "conditioned file generation");
    std::string er_checkpoint, er_corpus, er_split = "val", er_out, er_phase = "pretrained";
    evr->add_option("--checkpoint", er_checkpoint)->required();
    evr->add_option("--corpus", er_corpus)->required();
    evr->add_option("--split", er_split)->capture_default_str();
    evr->add_option("--out", er_out)->required();
    evr->add_option("--phase", er_phase)->capture_default_str();

    std::string ea_checkpoint, ea_corpus, ea_split = "", ea_out, ea_mode = "sampled:2000";
    std::string ea_region = "bytes";
    int ea_files_per_class = 1;
    std::uint64_t ea_seed = 0;
    eva->add_option("--checkpoint", ea_checkpoint)->required();
    eva->add_option("--corpus", ea_corpus)->required();
    eva->add_option("--split", ea_split);
    eva->add_option("--out", ea_out)->required();
    eva->add_option("--files", ea_files_per_class, "files per class")->capture_default_str();
    eva->add_option("--mode", ea_mode, "full|sampled:N")->capture_default_str();
    eva->add_option("--region", ea_region, "all|bytes")->capture_default_str();
    eva->add_option("--seed", ea_seed)->capture_default_str();

    std::string eg_checkpoint, eg_out, eg_decode = "greedy", eg_qualities = "30,50,60,70,75,80,85,90,92";
    std::string eg_classes = "0,1,2,3,4,5,6,7,8,9";
    int eg_beams = 4, eg_max_len = 0;
    double eg_top_p = 0.9;
    evg->add_option("--checkpoint", eg_checkpoint)->required();
    evg->add_option("--out", eg_out)->required();
    evg->add_option("--decode", eg_decode, "greedy|beam")->capture_default_str();
    evg->add_option("--beams", eg_beams)->capture_default_str();
    evg->add_option("--top-p", eg_top_p)->capture_default_str();
    evg->add_option("--qualities", eg_qualities)->capture_default_str();
    evg->add_option("--classes", eg_classes)->capture_default_str();
    evg->add_option("--max-len", eg_max_len)->capture_default_str();

    // ---------------- codec ----------------
    auto* co = app.add_subcommand("codec", "standalone JPEG utilities");
    co->require_subcommand(1);
    auto* coe = co->add_subcommand("encode", "PNM -> JPEG");
    auto* cod = co->add_subcommand("decode", "JPEG -> PNM");
    auto* cov = co->add_subcommand("validate", "strict validation with diagnostics");
    auto* coq = co->add_subcommand("quality", "estimate the quality setting");
    std::string ce_in, ce_out, cd_in, cd_out, cv_in, cq_in, ce_sub = "420";
    int ce_q = 75;
    coe->add_option("input", ce_in)->required();
    coe->add_option("output", ce_out)->required();
    coe->add_option("--q", ce_q)->capture_default_str();
    coe->add_option("--subsample", ce_sub, "420|444")->capture_default_str();
    cod->add_option("input", cd_in)->required();
    cod->add_option("output", cd_out)->required();
    cov->add_option("input", cv_in)->required();
    coq->add_option("input", cq_in)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }
    apply_thread_cap();

    if (cb->parsed()) {
        cli::RunLock lock(cb_out);
        auto qualities = parse_qualities(cb_qualities);
        std::vector<corpus::LabeledImage> images;
        corpus::AugmentSpec aug = corpus::AugmentSpec::none();
        std::map<std::string, std::uint64_t> hashes;
        if (cb_dataset == "synthetic") {
            images = corpus::synthetic_dataset(cb_per_class, cb_classes, cb_channels, cb_seed,
                                               cb_split);
        } else if (cb_dataset == "mnist") {
            if (cb_images.empty() || cb_labels.empty())
                throw CLI::ValidationError("--images/--labels required for mnist");
            images = corpus::load_idx(cb_images, cb_labels);
            aug = corpus::AugmentSpec::mnist();
            hashes["images"] = fnv1a64(read_file(cb_images));
            hashes["labels"] = fnv1a64(read_file(cb_labels));
        } else if (cb_dataset == "cifar") {
            if (cb_images.empty()) throw CLI::ValidationError("--images required for cifar");
            images = corpus::load_cifar(cb_images);
            aug = corpus::AugmentSpec::cifar();
            hashes["images"] = fnv1a64(read_file(cb_images));
        } else {
            throw CLI::ValidationError("unknown dataset " + cb_dataset);
        }
        auto manifest =
            corpus::build_corpus(images, qualities, aug, cb_multiplier, cb_split, cb_out, cb_seed);
        json resolved = {{"dataset", cb_dataset}, {"qualities", qualities},
                         {"multiplier", cb_multiplier}, {"seed", cb_seed},
                         {"split", cb_split},     {"entries", manifest.entries.size()}};
        cli::write_run_json(cb_out, "build-corpus", resolved, hashes);
        std::cout << "corpus: " << manifest.entries.size() << " entries in " << cb_out << "\n";
        return kExitOk;
    }

    if (tr->parsed() || ft->parsed()) {
        bool is_ft = ft->parsed();
        fs::path corpus_dir = is_ft ? ft_corpus : tr_corpus;
        fs::path out_dir = is_ft ? ft_out : tr_out;
        cli::RunLock lock(out_dir);
        auto corpus_files = load_corpus_files(corpus_dir, is_ft ? ft_split : tr_split);
        if (corpus_files.files.empty()) throw CLI::ValidationError("empty corpus/split");

        lm::Model<float> model;
        if (is_ft) {
            model = lm::load_checkpoint<float>(ft_checkpoint);
        } else if (!tr_resume.empty()) {
            model = lm::load_checkpoint<float>(tr_resume);
        } else {
            mc.seed = hp.seed;
            model = lm::init_model<float>(mc);
        }
        hp.loss_log_path = (out_dir / "loss_log.jsonl").string();

        std::vector<lm::StepLog> curve;
        if (is_ft) {
            if (ft_target != "quality" && ft_target != "class")
                throw CLI::ValidationError("--target must be quality or class");
            auto sentences =
                tokenize_corpus(corpus_files.files, "recognition", model.config.context_length);
            curve = lm::finetune_recognition(model, sentences,
                                             ft_target == "quality"
                                                 ? lm::FinetuneTarget::quality
                                                 : lm::FinetuneTarget::class_label,
                                             hp);
        } else {
            auto sentences =
                tokenize_corpus(corpus_files.files, tr_variant, model.config.context_length);
            curve = lm::train(model, sentences, hp);
        }
        auto ckpt = out_dir / "model.ckpt";
        lm::save_checkpoint(model, ckpt, corpus_files.manifest_hash);

        json resolved = {{"epochs", hp.epochs},       {"lr", hp.learning_rate},
                         {"batch_size", hp.batch_size}, {"warmup", hp.warmup_iterations},
                         {"seed", hp.seed},           {"steps", curve.size()},
                         {"final_loss", curve.empty() ? 0.0 : curve.back().loss},
                         {"layers", model.config.layers}, {"dim", model.config.model_dim},
                         {"heads", model.config.heads}, {"context", model.config.context_length}};
        if (is_ft) resolved["target"] = ft_target;
        cli::write_run_json(out_dir, is_ft ? "finetune" : "train", resolved,
                            {{"manifest", corpus_files.manifest_hash}});
        std::cout << (is_ft ? "finetuned" : "trained") << ": " << curve.size()
                  << " steps, final loss "
                  << (curve.empty() ? 0.0 : curve.back().loss) << ", checkpoint " << ckpt << "\n";
        return kExitOk;
    }

    if (evr->parsed()) {
        cli::RunLock lock(er_out);
        auto model = lm::load_checkpoint<float>(er_checkpoint);
        auto corpus_files = load_corpus_files(er_corpus, er_split);
        if (corpus_files.files.empty()) throw CLI::ValidationError("empty corpus/split");
        auto rep = eval::eval_recognition(model, corpus_files.files, er_phase);
        std::ofstream(fs::path(er_out) / "recognition.json") << eval::recognition_to_json(rep)
                                                             << "\n";
        cli::write_run_json(er_out, "eval recognize",
                            {{"split", er_split},
                             {"n", rep.n_samples},
                             {"quality_accuracy", rep.quality_accuracy},
                             {"class_accuracy", rep.class_accuracy}},
                            {{"manifest", corpus_files.manifest_hash},
                             {"checkpoint", fnv1a64(read_file(er_checkpoint))}});
        std::cout << "recognition: quality " << rep.quality_accuracy << ", class "
                  << rep.class_accuracy << " over " << rep.n_samples << " files\n";
        return kExitOk;
    }

    if (eva->parsed()) {
        cli::RunLock lock(ea_out);
        auto model = lm::load_checkpoint<float>(ea_checkpoint);
        auto corpus_files = load_corpus_files(ea_corpus, ea_split);
        std::map<std::string, ByteSequence> originals;
        std::map<int, int> taken;
        for (const auto& f : corpus_files.files)
            if (taken[f.class_label]++ < ea_files_per_class) originals[f.source_id] = f.bytes;
        if (originals.empty()) throw CLI::ValidationError("no files selected");

        std::optional<anomaly::SampledMode> sampled;
        if (ea_mode.rfind("sampled:", 0) == 0)
            sampled = anomaly::SampledMode{std::stoi(ea_mode.substr(8)), ea_seed};
        else if (ea_mode != "full")
            throw CLI::ValidationError("--mode must be full or sampled:N");
        auto region = ea_region == "all" ? lm::Region::all : lm::Region::bytes_only;

        auto res = anomaly::run_anomaly_eval(model, originals, sampled, {1, 3, 5}, region);
        fs::create_directories(ea_out);
        std::ofstream(fs::path(ea_out) / "detection.json")
            << anomaly::report_to_json(res.detection) << "\n";
        std::ofstream(fs::path(ea_out) / "correction.json")
            << anomaly::report_to_json(res.correction) << "\n";
        auto hist = fs::path(ea_out) / "tagging_histogram.csv";
        anomaly::write_histogram_csv(res.tagging, hist);
        std::ofstream(fs::path(ea_out) / "tagging.json")
            << anomaly::tagging_to_json(res.tagging, hist.string()) << "\n";
        cli::write_run_json(ea_out, "eval anomaly",
                            {{"mode", ea_mode},
                             {"seed", ea_seed},
                             {"region", ea_region},
                             {"files", static_cast<int>(originals.size())},
                             {"broken", res.broken_count},
                             {"valid", res.valid_count}},
                            {{"manifest", corpus_files.manifest_hash},
                             {"checkpoint", fnv1a64(read_file(ea_checkpoint))}});
        std::cout << "anomaly: " << res.broken_count << " broken / " << res.valid_count
                  << " valid variants; tagging p=" << res.tagging.p_value << "\n";
        return kExitOk;
    }

    if (evg->parsed()) {
        cli::RunLock lock(eg_out);
        auto model = lm::load_checkpoint<float>(eg_checkpoint);
        auto qualities = parse_qualities(eg_qualities);
        auto classes = parse_qualities(eg_classes);
        eval::GenerationReport rep;
        if (eg_decode == "beam") {
            eval::BeamDecode bd{eg_beams, eg_top_p};
            rep = eval::eval_generation(model, qualities, classes, fs::path(eg_out) / "files",
                                        eg_max_len, &bd);
        } else if (eg_decode == "greedy") {
            rep = eval::eval_generation(model, qualities, classes, fs::path(eg_out) / "files",
                                        eg_max_len);
        } else {
            throw CLI::ValidationError("--decode must be greedy or beam");
        }
        std::ofstream(fs::path(eg_out) / "generation.json") << eval::generation_to_json(rep)
                                                            << "\n";
        cli::write_run_json(eg_out, "eval generate",
                            {{"decode", eg_decode},
                             {"qualities", qualities},
                             {"classes", classes},
                             {"valid_fraction", rep.valid_fraction},
                             {"quality_match_fraction", rep.quality_match_fraction}},
                            {{"checkpoint", fnv1a64(read_file(eg_checkpoint))}});
        std::cout << "generation: valid " << rep.valid_fraction << ", quality match "
                  << rep.quality_match_fraction << " over " << rep.records.size() << " files\n";
        return kExitOk;
    }

    if (coe->parsed()) {
        auto raster = read_pnm(ce_in);
        auto sub = ce_sub == "444" ? jpeg::Subsampling::none : jpeg::Subsampling::s420;
        write_file(ce_out, jpeg::encode_image(raster, ce_q, sub));
        return kExitOk;
    }
    if (cod->parsed()) {
        auto report = jpeg::decode_stream(read_file(cd_in));
        if (!report.decoded) {
            for (const auto& d : report.diagnostics)
                std::cerr << jpeg::diag_name(d.code) << " at byte " << d.byte_offset << ": "
                          << d.message << "\n";
            return kExitNegative;
        }
        write_pnm(cd_out, *report.decoded);
        return kExitOk;
    }
    if (cov->parsed()) {
        auto report = jpeg::validate_stream(read_file(cv_in));
        for (const auto& d : report.diagnostics)
            std::cout << jpeg::diag_name(d.code) << " at byte " << d.byte_offset << ": "
                      << d.message << "\n";
        std::cout << (report.valid ? "valid" : "invalid") << "\n";
        return report.valid ? kExitOk : kExitNegative;
    }
    if (coq->parsed()) {
        auto est = jpeg::estimate_quality(read_file(cq_in));
        std::cout << est.quality << (est.exact ? "" : " (nearest)") << "\n";
        return kExitOk;
    }
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const cli::RunError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

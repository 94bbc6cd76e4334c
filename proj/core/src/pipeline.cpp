#include "paradiff/pipeline.hpp"

#include "paradiff/errors.hpp"
#include "paradiff/version.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <set>

namespace paradiff {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kClassifierStream = 0xC1A5;
constexpr std::uint64_t kEmbedderStream = 0xE5B;
constexpr std::uint64_t kFluencyStream = 0xF10;

void begin_stage(const fs::path& dir, const StageOptions& opt) {
    if (fs::exists(dir / "resolved_config.json") && !opt.force) {
        throw ConfigError("output directory " + dir.string() + " already holds a completed run; pass --force to overwrite");
    }
    fs::create_directories(dir);
}

void finish_stage(const fs::path& dir, const RunConfig& cfg) {
    write_text_file(dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
    write_text_file(dir / "VERSION", std::string(git_describe()) + "\n");
}

void require(const fs::path& path, const std::string& what, const std::string& stage) {
    if (!fs::exists(path)) {
        throw DependencyError("missing " + what + " (" + path.string() + "); run `paradiff " + stage + "` first");
    }
}

Corpus load_corpus(const WorkLayout& work) {
    require(work.corpus(), "corpus", "gen-corpus");
    return read_corpus(work.corpus());
}

DenoiserCheckpoint load_checkpoint(const WorkLayout& work) {
    require(work.denoiser(), "denoiser checkpoint", "train");
    return load_denoiser_checkpoint(work.denoiser());
}

GuidanceMode request_mode(const RunConfig& cfg) {
    return cfg.transfer.guidance.mode == GuidanceMode::style ? GuidanceMode::style : GuidanceMode::attribute;
}

// Models needed for guidance and evaluation, loaded on demand.
struct LoadedModels {
    std::optional<ToyAttributeClassifier> classifier_int, classifier_ext;
    std::optional<ToyStyleEmbedder> embedder_int, embedder_ext;
    std::optional<ToyFluencyScorer> fluency;
};

void load_guidance(LoadedModels& m, const WorkLayout& work, GuidanceMode mode) {
    if (mode == GuidanceMode::attribute) {
        require(work.classifier(true), "internal attribute classifier", "train-classifier");
        m.classifier_int = load_classifier(work.classifier(true));
    } else if (mode == GuidanceMode::style) {
        require(work.embedder(true), "internal style embedder", "train-embedder");
        m.embedder_int = load_style_embedder(work.embedder(true));
    }
}

void load_evaluators(LoadedModels& m, const WorkLayout& work, GuidanceMode mode) {
    load_guidance(m, work, mode);
    require(work.fluency(), "fluency scorer", "train-classifier");
    m.fluency = load_fluency_scorer(work.fluency());
    if (mode == GuidanceMode::attribute) {
        require(work.classifier(false), "external attribute classifier", "train-classifier");
        m.classifier_ext = load_classifier(work.classifier(false));
    } else {
        require(work.embedder(false), "external style embedder", "train-embedder");
        m.embedder_ext = load_style_embedder(work.embedder(false));
    }
}

GuidanceModels guidance_models(const LoadedModels& m) {
    return {m.classifier_int ? &*m.classifier_int : nullptr, m.embedder_int ? &*m.embedder_int : nullptr};
}

struct EvalScorers {
    ContentF1Similarity similarity;
    ToyFluency fluency;
    EvalModels models;
};

EvalScorers eval_scorers(const LoadedModels& m, const Vocabulary& vocab, GuidanceMode mode) {
    EvalScorers s{ContentF1Similarity(vocab), ToyFluency(*m.fluency), {}};
    if (mode == GuidanceMode::attribute) {
        s.models.internal_classifier = &*m.classifier_int;
        s.models.external_classifier = &*m.classifier_ext;
        s.models.internal_provenance = m.classifier_int->provenance();
        s.models.external_provenance = m.classifier_ext->provenance();
    } else {
        s.models.internal_embedder = &*m.embedder_int;
        s.models.external_embedder = &*m.embedder_ext;
        s.models.internal_provenance = m.embedder_int->provenance();
        s.models.external_provenance = m.embedder_ext->provenance();
    }
    return s;
}

void wire(EvalScorers& s) {
    s.models.similarity = &s.similarity;
    s.models.fluency = &s.fluency;
}

}  // namespace

Provenance model_provenance(const RunConfig& cfg, const std::string& kind, bool internal) {
    const std::uint64_t stream = kind == "classifier" ? kClassifierStream : kEmbedderStream;
    return {internal ? "internal" : "external", internal ? 0 : 1, derive_seed(cfg.seed, stream, internal ? 0 : 1)};
}

std::vector<int> training_folds(const Corpus& corpus) {
    std::vector<int> folds(corpus.texts.size(), -1);
    std::map<int, int> seen;
    for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
        const auto& t = corpus.texts[i];
        if (t.split == Split::train && !t.holdout) folds[i] = seen[t.author]++ % 2;
    }
    return folds;
}

std::vector<TransferRequest> make_requests(const Corpus& corpus, const RunConfig& cfg) {
    const Vocabulary vocab = cfg.corpus.vocabulary();
    Rng rng(cfg.eval.seed);
    std::vector<TransferRequest> out;
    if (request_mode(cfg) == GuidanceMode::attribute) {
        std::vector<const LabeledText*> pool;
        for (const auto& t : corpus.texts) {
            if (t.split == Split::test) pool.push_back(&t);
        }
        shuffle_in_place(pool, rng);
        for (const LabeledText* t : pool) {
            if (static_cast<int>(out.size()) >= cfg.eval.items) break;
            int source = rule_attribute(t->tokens, vocab);
            if (source < 0) source = t->attribute;
            TransferRequest r;
            r.source = t->tokens;
            r.target_class = (source + 1) % cfg.corpus.styles;
            r.direction = "to_" + std::to_string(r.target_class);
            r.meta = Json{{"author", t->author}, {"source_class", source}};
            out.push_back(std::move(r));
        }
        return out;
    }

    std::map<int, std::vector<TokenSequence>> exemplars;
    std::vector<const LabeledText*> pool;
    for (const auto& t : corpus.texts) {
        if (!t.holdout) continue;
        auto& ex = exemplars[t.author];
        if (t.split == Split::train && static_cast<int>(ex.size()) < cfg.eval.exemplars) ex.push_back(t.tokens);
        if (t.split == Split::test) pool.push_back(&t);
    }
    std::vector<int> authors;
    for (const auto& [a, ex] : exemplars) {
        if (!ex.empty()) authors.push_back(a);
    }
    if (authors.size() < 2) throw ConfigError("style transfer needs at least two held-out authors with training texts");
    shuffle_in_place(pool, rng);
    for (const LabeledText* t : pool) {
        if (static_cast<int>(out.size()) >= cfg.eval.items) break;
        if (!exemplars.contains(t->author) || exemplars[t->author].empty()) continue;
        std::vector<int> others;
        for (int a : authors) {
            if (a != t->author) others.push_back(a);
        }
        const int target = others[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(others.size()) - 1))];
        TransferRequest r;
        r.source = t->tokens;
        r.source_exemplars = exemplars[t->author];
        r.target_exemplars = exemplars[target];
        r.direction = "to_author_" + std::to_string(target);
        r.meta = Json{{"author", t->author}, {"target_author", target}};
        out.push_back(std::move(r));
    }
    return out;
}

Corpus run_gen_corpus(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    begin_stage(work.corpus_dir(), opt);
    Corpus corpus = generate(cfg.corpus);
    if (corpus.texts.empty()) throw ContractError("corpus generation produced no texts");
    write_corpus(work.corpus(), corpus);
    finish_stage(work.corpus_dir(), cfg);
    spdlog::info("corpus: {} texts -> {}", corpus.texts.size(), work.corpus().string());
    return corpus;
}

std::vector<PairExample> run_build_pairs(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    begin_stage(work.pairs_dir(), opt);
    const Paraphraser paraphraser(cfg.paraphrase, cfg.corpus.vocabulary());
    auto pairs = build_pairs(corpus, paraphraser);
    write_pairs(work.pairs(), pairs, Json{{"paraphrase", to_json(cfg.paraphrase)}});
    finish_stage(work.pairs_dir(), cfg);
    spdlog::info("pairs: {} -> {}", pairs.size(), work.pairs().string());
    return pairs;
}

TrainResult run_train(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    require(work.pairs(), "paraphrase pairs", "build-pairs");
    const auto pairs = read_pairs(work.pairs());
    begin_stage(work.denoiser_dir(), opt);
    const PairSplit split = split_pairs(pairs, cfg.train.validation_fraction, cfg.train.seed);
    TrainResult result = train(cfg.train, split.train, split.validation);
    save_denoiser_checkpoint(work.denoiser(), result.best);
    write_loss_curve(work.loss_curve(), result.curve);
    finish_stage(work.denoiser_dir(), cfg);
    spdlog::info("denoiser: step {} validation loss {:.4f} -> {}", result.best.step, result.best.validation_loss,
                 work.denoiser().string());
    return result;
}

Json run_train_classifier(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    begin_stage(work.classifiers_dir(), opt);
    const auto folds = training_folds(corpus);
    std::vector<LabeledExample> fold_data[2], heldout;
    std::vector<TokenSequence> fluent_train, fluent_heldout;
    for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
        const auto& t = corpus.texts[i];
        if (t.holdout) continue;
        if (folds[i] >= 0) {
            fold_data[folds[i]].push_back({t.tokens, t.attribute});
            fluent_train.push_back(t.tokens);
        } else if (t.split == Split::val) {
            heldout.push_back({t.tokens, t.attribute});
            fluent_heldout.push_back(t.tokens);
        }
    }
    Json report = Json::object();
    for (bool internal : {true, false}) {
        ClassifierReport r;
        const auto model = train_classifier(fold_data[internal ? 0 : 1], heldout, cfg.classifier,
                                            model_provenance(cfg, "classifier", internal), &r);
        save_classifier(work.classifier(internal), model);
        report[internal ? "internal" : "external"] = Json{{"heldout_accuracy", r.heldout_accuracy}};
        spdlog::info("{} classifier: held-out accuracy {:.3f}", internal ? "internal" : "external", r.heldout_accuracy);
    }
    FluencyReport fr;
    const auto fluency = train_fluency_scorer(fluent_train, fluent_heldout, cfg.fluency,
                                              Provenance{"fluency", -1, derive_seed(cfg.seed, kFluencyStream)}, &fr);
    save_fluency_scorer(work.fluency(), fluency);
    report["fluency"] = Json{{"heldout_auc", fr.heldout_auc}};
    spdlog::info("fluency scorer: held-out AUC {:.3f}", fr.heldout_auc);
    write_text_file(work.classifiers_dir() / "report.json", report.dump(2) + "\n");
    finish_stage(work.classifiers_dir(), cfg);
    return report;
}

Json run_train_embedder(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    begin_stage(work.embedders_dir(), opt);
    const auto folds = training_folds(corpus);
    std::vector<LabeledExample> fold_data[2], heldout;
    for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
        const auto& t = corpus.texts[i];
        if (t.holdout) {
            heldout.push_back({t.tokens, t.author});
        } else if (folds[i] >= 0) {
            fold_data[folds[i]].push_back({t.tokens, t.author});
        }
    }
    Json report = Json::object();
    for (bool internal : {true, false}) {
        EmbedderReport r;
        const auto model = train_style_embedder(fold_data[internal ? 0 : 1], heldout, cfg.embedder,
                                                model_provenance(cfg, "embedder", internal), &r);
        save_style_embedder(work.embedder(internal), model);
        report[internal ? "internal" : "external"] =
            Json{{"same_author", r.same_author_similarity}, {"different_author", r.different_author_similarity},
                 {"margin", r.margin()}};
        spdlog::info("{} embedder: held-out margin {:.3f}", internal ? "internal" : "external", r.margin());
    }
    write_text_file(work.embedders_dir() / "report.json", report.dump(2) + "\n");
    finish_stage(work.embedders_dir(), cfg);
    return report;
}

std::vector<TransferRecord> run_transfer(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    const DenoiserCheckpoint ckpt = load_checkpoint(work);
    LoadedModels models;
    load_guidance(models, work, cfg.transfer.guidance.mode);
    begin_stage(work.transfer_dir(), opt);
    const auto requests = make_requests(corpus, cfg);
    const Paraphraser paraphraser(cfg.paraphrase, cfg.corpus.vocabulary());
    auto records = transfer_batch(requests, cfg.transfer, ckpt, paraphraser, guidance_models(models));
    write_transfers(work.transfers(), records, cfg.corpus.vocabulary());
    finish_stage(work.transfer_dir(), cfg);
    spdlog::info("transfer: {} records -> {}", records.size(), work.transfers().string());
    return records;
}

EvalReport run_evaluate(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    require(work.transfers(), "transfer records", "transfer");
    const Vocabulary vocab = cfg.corpus.vocabulary();
    const auto records = read_transfers(work.transfers(), vocab);
    const GuidanceMode mode = request_mode(cfg);
    LoadedModels models;
    load_evaluators(models, work, mode);
    begin_stage(work.eval_dir(), opt);
    EvalScorers scorers = eval_scorers(models, vocab, mode);
    wire(scorers);
    EvalReport report = evaluate(records, make_requests(corpus, cfg), mode, scorers.models);
    report.run = Json{{"transfer", to_json(cfg.transfer)}, {"items", records.size()}};
    write_text_file(work.report(), to_json(report).dump(2) + "\n");
    finish_stage(work.eval_dir(), cfg);
    spdlog::info("evaluate: joint {:.3f} acc_int {:.3f} acc_ext {:.3f} sim {:.3f} flu {:.3f}", report.overall.joint,
                 report.overall.internal_acc, report.overall.external_acc, report.overall.similarity,
                 report.overall.fluency);
    return report;
}

SweepResult run_sweep(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt) {
    const Corpus corpus = load_corpus(work);
    const DenoiserCheckpoint ckpt = load_checkpoint(work);
    const GuidanceMode mode = request_mode(cfg);
    if (cfg.transfer.guidance.mode == GuidanceMode::none) {
        throw ConfigError("sweep needs transfer.guidance.mode set to attribute or style");
    }
    const Vocabulary vocab = cfg.corpus.vocabulary();
    LoadedModels models;
    load_evaluators(models, work, mode);
    const fs::path dir = work.sweep_dir(mode);
    begin_stage(dir, opt);
    EvalScorers scorers = eval_scorers(models, vocab, mode);
    wire(scorers);
    const Paraphraser paraphraser(cfg.paraphrase, vocab);
    SweepResult result = sweep(cfg.eval.lambdas, make_requests(corpus, cfg), cfg.transfer, ckpt, paraphraser,
                               guidance_models(models), scorers.models);
    write_text_file(dir / "sweep.json", sweep_json(result).dump(2) + "\n");
    write_text_file(dir / "sweep.csv", sweep_csv(result));
    write_text_file(dir / "sweep.svg", sweep_svg(result));
    for (std::size_t i = 0; i < result.transfers.size(); ++i) {
        write_transfers(dir / ("transfers_" + std::to_string(i) + ".jsonl"), result.transfers[i], vocab);
    }
    finish_stage(dir, cfg);
    return result;
}

}  // namespace paradiff

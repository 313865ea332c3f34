#include "diffpur/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "diffpur/errors.hpp"

using nlohmann::json;

namespace diffpur {

namespace {

// Fixed substream tags; every stage draws its randomness from
// master.substream(tag) so stages stay independent of each other's
// draw counts.
constexpr std::uint64_t kTagTrainData = 1;
constexpr std::uint64_t kTagEvalData = 2;
constexpr std::uint64_t kTagInit = 3;
constexpr std::uint64_t kTagFit = 4;
constexpr std::uint64_t kTagAttack = 5;
constexpr std::uint64_t kTagPurify = 6;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return std::forward<F>(f)();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(std::string(name) + ": " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(name) + ": " + e.what());
    }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

ClassifierKind classifier_kind_from_name(const std::string& name) {
    if (name == "softmax_linear") return ClassifierKind::SoftmaxLinear;
    if (name == "mlp1") return ClassifierKind::Mlp1;
    throw ConfigError("unknown classifier kind '" + name + "'");
}

std::string classifier_kind_name(ClassifierKind k) {
    return k == ClassifierKind::SoftmaxLinear ? "softmax_linear" : "mlp1";
}

AttackKind attack_kind_from_name(const std::string& name) {
    if (name == "none") return AttackKind::None;
    if (name == "pgd") return AttackKind::Pgd;
    if (name == "bpda_eot") return AttackKind::BpdaEot;
    if (name == "spsa") return AttackKind::Spsa;
    throw ConfigError("unknown attack kind '" + name + "'");
}

std::string attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::Pgd: return "pgd";
        case AttackKind::BpdaEot: return "bpda_eot";
        case AttackKind::Spsa: return "spsa";
    }
    throw ConfigError("unknown attack kind");
}

Metric metric_from_name(const std::string& name) {
    if (name == "mse") return Metric::Mse;
    if (name == "ssim") return Metric::Ssim;
    throw ConfigError("unknown guidance metric '" + name + "'");
}

AdvNoiseMode adv_noise_from_name(const std::string& name) {
    if (name == "fresh") return AdvNoiseMode::Fresh;
    if (name == "frozen") return AdvNoiseMode::Frozen;
    throw ConfigError("unknown anchor noise mode '" + name + "'");
}

Sigma2Policy sigma2_from_name(const std::string& name) {
    if (name == "small") return Sigma2Policy::Small;
    if (name == "large") return Sigma2Policy::Large;
    throw ConfigError("unknown sigma2 policy '" + name + "'");
}

}  // namespace

void validate(const RunConfig& cfg) {
    if (cfg.schedule.T < 2) throw ConfigError("schedule T must be at least 2");
    const DatasetParams& d = cfg.dataset;
    if (d.num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
    if (d.H < 1 || d.W < 1 || d.C < 1) throw ConfigError("dataset dims must be positive");
    if (d.train_per_class < 1 || d.eval_per_class < 1)
        throw ConfigError("per-class counts must be positive");
    const ClassifierParams& c = cfg.classifier;
    if (c.kind == ClassifierKind::Mlp1 && c.hidden_dim < 1)
        throw ConfigError("hidden_dim must be positive");
    if (c.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (c.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(c.lr >= 0.0)) throw ConfigError("lr must be nonnegative");
    if (!(c.init_scale > 0.0)) throw ConfigError("init_scale must be positive");
    validate(cfg.attack);
    const int eval_total = d.num_classes * d.eval_per_class;
    if (cfg.eval_subset < 0 || cfg.eval_subset > eval_total)
        throw ConfigError("eval_subset exceeds the evaluation split");
    if (cfg.workers < 1) throw ConfigError("workers must be positive");
    // Purifier settings are checked against the actual schedule.
    NoiseSchedule s = linear_schedule(cfg.schedule.T, cfg.schedule.beta1, cfg.schedule.betaT);
    if (cfg.purifier_enabled) validate(cfg.purify, s);
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    read_if(j, "seed", cfg.seed);
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        read_if(s, "T", cfg.schedule.T);
        read_if(s, "beta1", cfg.schedule.beta1);
        read_if(s, "betaT", cfg.schedule.betaT);
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        read_if(d, "num_classes", cfg.dataset.num_classes);
        read_if(d, "H", cfg.dataset.H);
        read_if(d, "W", cfg.dataset.W);
        read_if(d, "C", cfg.dataset.C);
        read_if(d, "train_per_class", cfg.dataset.train_per_class);
        read_if(d, "eval_per_class", cfg.dataset.eval_per_class);
        read_if(d, "contrast", cfg.dataset.contrast);
        read_if(d, "var", cfg.dataset.var);
    }
    if (j.contains("classifier")) {
        const json& c = j.at("classifier");
        if (c.contains("kind"))
            cfg.classifier.kind = classifier_kind_from_name(c.at("kind").get<std::string>());
        read_if(c, "hidden_dim", cfg.classifier.hidden_dim);
        read_if(c, "init_scale", cfg.classifier.init_scale);
        read_if(c, "epochs", cfg.classifier.epochs);
        read_if(c, "lr", cfg.classifier.lr);
        read_if(c, "batch_size", cfg.classifier.batch_size);
    }
    if (j.contains("attack")) {
        const json& a = j.at("attack");
        if (a.contains("kind"))
            cfg.attack.kind = attack_kind_from_name(a.at("kind").get<std::string>());
        read_if(a, "gamma", cfg.attack.gamma);
        read_if(a, "steps", cfg.attack.steps);
        read_if(a, "step_size", cfg.attack.step_size);
        read_if(a, "targeted", cfg.attack.targeted);
        read_if(a, "random_start", cfg.attack.random_start);
        read_if(a, "eot_samples", cfg.attack.eot_samples);
        read_if(a, "spsa_queries", cfg.attack.spsa_queries);
        read_if(a, "spsa_perturb", cfg.attack.spsa_perturb);
    }
    if (j.contains("purify")) {
        const json& p = j.at("purify");
        read_if(p, "enabled", cfg.purifier_enabled);
        read_if(p, "Tc", cfg.purify.Tc);
        read_if(p, "M", cfg.purify.M);
        read_if(p, "guided", cfg.purify.guided);
        read_if(p, "respace_K", cfg.purify.respace_K);
        read_if(p, "clamp_output", cfg.purify.clamp_output);
        if (p.contains("sigma2"))
            cfg.purify.policy = sigma2_from_name(p.at("sigma2").get<std::string>());
        read_if(p, "anchor_original", cfg.purify.anchor_original);
        read_if(p, "tc_threshold", cfg.purify.tc_threshold);
        if (p.contains("guidance")) {
            const json& g = p.at("guidance");
            if (g.contains("metric"))
                cfg.purify.guidance.metric = metric_from_name(g.at("metric").get<std::string>());
            read_if(g, "a", cfg.purify.guidance.a);
            read_if(g, "gamma", cfg.purify.guidance.gamma);
            read_if(g, "ssim_window", cfg.purify.guidance.ssim_window);
            read_if(g, "ssim_c1", cfg.purify.guidance.ssim_c1);
            read_if(g, "ssim_c2", cfg.purify.guidance.ssim_c2);
            if (g.contains("anchor_noise"))
                cfg.purify.guidance.adv_noise =
                    adv_noise_from_name(g.at("anchor_noise").get<std::string>());
        }
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        read_if(e, "subset", cfg.eval_subset);
        read_if(e, "workers", cfg.workers);
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        read_if(o, "report_json", cfg.report_json);
        read_if(o, "records_csv", cfg.records_csv);
    }
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    return json{
        {"seed", cfg.seed},
        {"schedule",
         {{"T", cfg.schedule.T}, {"beta1", cfg.schedule.beta1}, {"betaT", cfg.schedule.betaT}}},
        {"dataset",
         {{"num_classes", cfg.dataset.num_classes},
          {"H", cfg.dataset.H},
          {"W", cfg.dataset.W},
          {"C", cfg.dataset.C},
          {"train_per_class", cfg.dataset.train_per_class},
          {"eval_per_class", cfg.dataset.eval_per_class},
          {"contrast", cfg.dataset.contrast},
          {"var", cfg.dataset.var}}},
        {"classifier",
         {{"kind", classifier_kind_name(cfg.classifier.kind)},
          {"hidden_dim", cfg.classifier.hidden_dim},
          {"init_scale", cfg.classifier.init_scale},
          {"epochs", cfg.classifier.epochs},
          {"lr", cfg.classifier.lr},
          {"batch_size", cfg.classifier.batch_size}}},
        {"attack",
         {{"kind", attack_kind_name(cfg.attack.kind)},
          {"gamma", cfg.attack.gamma},
          {"steps", cfg.attack.steps},
          {"step_size", cfg.attack.step_size},
          {"targeted", cfg.attack.targeted},
          {"random_start", cfg.attack.random_start},
          {"eot_samples", cfg.attack.eot_samples},
          {"spsa_queries", cfg.attack.spsa_queries},
          {"spsa_perturb", cfg.attack.spsa_perturb}}},
        {"purify",
         {{"enabled", cfg.purifier_enabled},
          {"Tc", cfg.purify.Tc},
          {"M", cfg.purify.M},
          {"guided", cfg.purify.guided},
          {"respace_K", cfg.purify.respace_K},
          {"clamp_output", cfg.purify.clamp_output},
          {"sigma2", cfg.purify.policy == Sigma2Policy::Small ? "small" : "large"},
          {"anchor_original", cfg.purify.anchor_original},
          {"tc_threshold", cfg.purify.tc_threshold},
          {"guidance",
           {{"metric", cfg.purify.guidance.metric == Metric::Mse ? "mse" : "ssim"},
            {"a", cfg.purify.guidance.a},
            {"gamma", cfg.purify.guidance.gamma},
            {"ssim_window", cfg.purify.guidance.ssim_window},
            {"ssim_c1", cfg.purify.guidance.ssim_c1},
            {"ssim_c2", cfg.purify.guidance.ssim_c2},
            {"anchor_noise",
             cfg.purify.guidance.adv_noise == AdvNoiseMode::Fresh ? "fresh" : "frozen"}}}}},
        {"eval", {{"subset", cfg.eval_subset}, {"workers", cfg.workers}}},
        {"output", {{"report_json", cfg.report_json}, {"records_csv", cfg.records_csv}}}};
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

namespace {

// Class-balanced evaluation order: one image of each class in turn, so
// any subset prefix keeps the classes even.
std::vector<int> balanced_order(int num_classes, int per_class) {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(num_classes) * per_class);
    for (int k = 0; k < per_class; ++k)
        for (int c = 0; c < num_classes; ++c) order.push_back(c * per_class + k);
    return order;
}

struct PerImageWork {
    ImageRecord record;
    double attack_seconds = 0.0;
    double purify_seconds = 0.0;
};

}  // namespace

EvalReport evaluate(const RunConfig& cfg) {
    validate(cfg);
    const auto t_total = std::chrono::steady_clock::now();

    NoiseSchedule s = stage("schedule", [&] {
        return linear_schedule(cfg.schedule.T, cfg.schedule.beta1, cfg.schedule.betaT);
    });

    RandomSource master(cfg.seed);
    const DatasetParams& dp = cfg.dataset;
    GeneratedData train_gen = stage("dataset", [&] {
        RandomSource rng = master.substream(kTagTrainData);
        return make_gmm_image_dataset(dp.num_classes, dp.H, dp.W, dp.C,
                                      dp.train_per_class, dp.contrast, dp.var, rng);
    });
    GeneratedData eval_gen = stage("dataset", [&] {
        RandomSource rng = master.substream(kTagEvalData);
        return make_gmm_image_dataset(dp.num_classes, dp.H, dp.W, dp.C,
                                      dp.eval_per_class, dp.contrast, dp.var, rng);
    });

    EvalTimings timings;
    Classifier model = stage("classifier", [&] {
        RandomSource init_rng = master.substream(kTagInit);
        const int D = dp.H * dp.W * dp.C;
        Classifier m = cfg.classifier.kind == ClassifierKind::Mlp1
                           ? Classifier(make_mlp1(D, cfg.classifier.hidden_dim,
                                                  dp.num_classes, cfg.classifier.init_scale,
                                                  init_rng))
                           : Classifier(make_softmax_linear(D, dp.num_classes,
                                                            cfg.classifier.init_scale,
                                                            init_rng));
        RandomSource fit_rng = master.substream(kTagFit);
        const auto t0 = std::chrono::steady_clock::now();
        train(m, train_gen.data, cfg.classifier.epochs, cfg.classifier.lr,
              cfg.classifier.batch_size, fit_rng);
        timings.train_seconds = seconds_since(t0);
        return m;
    });

    GmmDenoiser denoiser(train_gen.mixture);
    PurifyFn defense = [&](const Tensor& img, RandomSource& r) {
        return purify(img, cfg.purify, denoiser, s, r);
    };
    PurifyFn identity = [](const Tensor& img, RandomSource&) { return img; };

    const int eval_total = dp.num_classes * dp.eval_per_class;
    const int n = cfg.eval_subset > 0 ? cfg.eval_subset : eval_total;
    const std::vector<int> order = balanced_order(dp.num_classes, dp.eval_per_class);

    RandomSource attack_stream = master.substream(kTagAttack);
    RandomSource purify_stream = master.substream(kTagPurify);

    std::vector<PerImageWork> work(n);
    auto process = [&](int slot) {
        const int idx = order[slot];
        const Tensor& x = eval_gen.data.images[idx];
        const int y = eval_gen.data.labels[idx];
        PerImageWork& w = work[slot];
        w.record.index = idx;
        w.record.true_label = y;

        stage("purify", [&] {
            const auto t0 = std::chrono::steady_clock::now();
            const Tensor clean_in = cfg.purifier_enabled
                                        ? [&] {
                                              RandomSource r = purify_stream.substream(
                                                  2 * static_cast<std::uint64_t>(idx));
                                              return defense(x, r);
                                          }()
                                        : x;
            w.purify_seconds += seconds_since(t0);
            w.record.clean_pred = predict(model, clean_in);
            return 0;
        });

        // Without an attack the defended pass is the clean pass; reuse it
        // so robust accuracy is identically standard accuracy.
        if (cfg.attack.kind == AttackKind::None) {
            w.record.adv_pred = predict(model, x);
            w.record.purified_pred = w.record.clean_pred;
            w.record.linf_perturbation = 0.0;
            return;
        }

        Tensor x_adv = stage("attack", [&] {
            RandomSource r = attack_stream.substream(static_cast<std::uint64_t>(idx));
            const auto t0 = std::chrono::steady_clock::now();
            Tensor adv = x;
            switch (cfg.attack.kind) {
                case AttackKind::None: break;
                case AttackKind::Pgd:
                    adv = pgd(model, x, y, cfg.attack, r);
                    break;
                case AttackKind::BpdaEot:
                    adv = bpda_eot(model, cfg.purifier_enabled ? defense : identity, x, y,
                                   cfg.attack, r);
                    break;
                case AttackKind::Spsa:
                    adv = cfg.purifier_enabled ? spsa(model, defense, x, y, cfg.attack, r)
                                               : spsa(model, x, y, cfg.attack, r);
                    break;
            }
            w.attack_seconds += seconds_since(t0);
            // Hard gate: a record enters the robust tally only after its
            // ball and pixel-range invariants re-verify here.
            check_attack_output(x, adv, cfg.attack.gamma);
            return adv;
        });
        w.record.adv_pred = predict(model, x_adv);
        w.record.linf_perturbation = linf_distance(x_adv, x);

        stage("purify", [&] {
            const auto t0 = std::chrono::steady_clock::now();
            const Tensor defended_in = cfg.purifier_enabled
                                           ? [&] {
                                                 RandomSource r = purify_stream.substream(
                                                     2 * static_cast<std::uint64_t>(idx) + 1);
                                                 return defense(x_adv, r);
                                             }()
                                           : x_adv;
            w.purify_seconds += seconds_since(t0);
            w.record.purified_pred = predict(model, defended_in);
            return 0;
        });
    };

    if (cfg.workers <= 1) {
        for (int i = 0; i < n; ++i) process(i);
    } else {
        std::vector<std::thread> pool;
        std::mutex err_mutex;
        std::exception_ptr first_error;
        const int workers = std::min(cfg.workers, n);
        for (int wk = 0; wk < workers; ++wk) {
            pool.emplace_back([&, wk] {
                for (int i = wk; i < n; i += workers) {
                    try {
                        process(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    EvalReport report;
    report.seed = cfg.seed;
    report.config_echo = run_config_to_json(cfg);
    int clean_hits = 0, robust_hits = 0;
    for (const PerImageWork& w : work) {
        if (w.record.clean_pred == w.record.true_label) ++clean_hits;
        if (w.record.purified_pred == w.record.true_label) ++robust_hits;
        timings.attack_seconds += w.attack_seconds;
        timings.purify_seconds += w.purify_seconds;
        report.records.push_back(w.record);
    }
    report.standard_accuracy = static_cast<double>(clean_hits) / n;
    report.robust_accuracy = static_cast<double>(robust_hits) / n;
    timings.total_seconds = seconds_since(t_total);
    report.timings = timings;
    return report;
}

std::string format_accuracy(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

json report_to_json(const EvalReport& r) {
    json doc = {{"standard_accuracy", r.standard_accuracy},
                {"robust_accuracy", r.robust_accuracy},
                {"standard_accuracy_display", format_accuracy(r.standard_accuracy)},
                {"robust_accuracy_display", format_accuracy(r.robust_accuracy)},
                {"seed", r.seed},
                {"timings",
                 {{"train_seconds", r.timings.train_seconds},
                  {"attack_seconds", r.timings.attack_seconds},
                  {"purify_seconds", r.timings.purify_seconds},
                  {"total_seconds", r.timings.total_seconds}}},
                {"config", r.config_echo},
                {"records", json::array()}};
    for (const ImageRecord& rec : r.records)
        doc["records"].push_back({{"index", rec.index},
                                  {"true_label", rec.true_label},
                                  {"clean_pred", rec.clean_pred},
                                  {"adv_pred", rec.adv_pred},
                                  {"purified_pred", rec.purified_pred},
                                  {"linf_perturbation", rec.linf_perturbation}});
    return doc;
}

EvalReport report_from_json(const json& doc) {
    EvalReport r;
    r.standard_accuracy = doc.at("standard_accuracy").get<double>();
    r.robust_accuracy = doc.at("robust_accuracy").get<double>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    const json& t = doc.at("timings");
    r.timings.train_seconds = t.at("train_seconds").get<double>();
    r.timings.attack_seconds = t.at("attack_seconds").get<double>();
    r.timings.purify_seconds = t.at("purify_seconds").get<double>();
    r.timings.total_seconds = t.at("total_seconds").get<double>();
    r.config_echo = doc.at("config");
    for (const json& rec : doc.at("records")) {
        ImageRecord ir;
        ir.index = rec.at("index").get<int>();
        ir.true_label = rec.at("true_label").get<int>();
        ir.clean_pred = rec.at("clean_pred").get<int>();
        ir.adv_pred = rec.at("adv_pred").get<int>();
        ir.purified_pred = rec.at("purified_pred").get<int>();
        ir.linf_perturbation = rec.at("linf_perturbation").get<double>();
        r.records.push_back(ir);
    }
    return r;
}

void report_write(const EvalReport& r, const std::string& json_path,
                  const std::string& csv_path) {
    if (r.records.empty()) throw ConfigError("report has no per-image records");
    if (!(r.standard_accuracy >= 0.0 && r.standard_accuracy <= 1.0) ||
        !(r.robust_accuracy >= 0.0 && r.robust_accuracy <= 1.0))
        throw ConfigError("report accuracies must lie in [0,1]");

    if (!json_path.empty()) {
        std::ofstream out(json_path);
        if (!out) throw IoError("cannot open " + json_path + " for writing");
        out << report_to_json(r).dump(2) << '\n';
        if (!out) throw IoError("short write to " + json_path);
    }

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot open " + csv_path + " for writing");
        out << "index,true_label,clean_pred,adv_pred,purified_pred,linf_perturbation\n";
        char buf[64];
        for (const ImageRecord& rec : r.records) {
            std::snprintf(buf, sizeof(buf), "%.17g", rec.linf_perturbation);
            out << rec.index << ',' << rec.true_label << ',' << rec.clean_pred << ','
                << rec.adv_pred << ',' << rec.purified_pred << ',' << buf << '\n';
        }
        if (!out) throw IoError("short write to " + csv_path);
    }
}

EvalReport report_read(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw IoError("cannot open " + json_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw IoError(json_path + ": " + e.what());
    }
    try {
        return report_from_json(doc);
    } catch (const json::exception& e) {
        throw IoError(json_path + ": " + e.what());
    }
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "Tc") return SweepAxis::Tc;
    if (name == "M") return SweepAxis::M;
    if (name == "a") return SweepAxis::GuidanceA;
    if (name == "respace_K") return SweepAxis::RespaceK;
    if (name == "gamma") return SweepAxis::Gamma;
    throw ConfigError("unknown sweep axis '" + name + "' (want Tc, M, a, respace_K, gamma)");
}

std::string sweep_axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Tc: return "Tc";
        case SweepAxis::M: return "M";
        case SweepAxis::GuidanceA: return "a";
        case SweepAxis::RespaceK: return "respace_K";
        case SweepAxis::Gamma: return "gamma";
    }
    throw ConfigError("unknown sweep axis");
}

namespace {

int integral_value(SweepAxis axis, double v) {
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9)
        throw ConfigError("sweep axis " + sweep_axis_name(axis) + " needs integer values");
    return static_cast<int>(r);
}

}  // namespace

SweepResult sweep(const RunConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    SweepResult out;
    out.axis = axis;
    out.values = values;
    for (double v : values) {
        RunConfig point = cfg;
        switch (axis) {
            case SweepAxis::Tc:
                point.purify.Tc = integral_value(axis, v);
                break;
            case SweepAxis::M:
                point.purify.M = integral_value(axis, v);
                break;
            case SweepAxis::GuidanceA:
                point.purify.guidance.a = v;
                break;
            case SweepAxis::RespaceK:
                point.purify.respace_K = integral_value(axis, v);
                break;
            case SweepAxis::Gamma:
                point.attack.gamma = v;
                point.purify.guidance.gamma = v;
                break;
        }
        out.reports.push_back(evaluate(point));
    }
    return out;
}

void sweep_write_csv(const SweepResult& s, const std::string& path) {
    if (s.reports.size() != s.values.size())
        throw ConfigError("sweep result is inconsistent");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "axis,value,standard_accuracy,robust_accuracy,train_seconds,attack_seconds,"
           "purify_seconds,total_seconds\n";
    char buf[64];
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const EvalReport& r = s.reports[i];
        std::snprintf(buf, sizeof(buf), "%.17g", s.values[i]);
        out << sweep_axis_name(s.axis) << ',' << buf << ','
            << format_accuracy(r.standard_accuracy) << ','
            << format_accuracy(r.robust_accuracy) << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", r.timings.train_seconds);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", r.timings.attack_seconds);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", r.timings.purify_seconds);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", r.timings.total_seconds);
        out << buf << '\n';
    }
    if (!out) throw IoError("short write to " + path);
}

}  // namespace diffpur

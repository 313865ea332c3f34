#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffpur/attacks.hpp"
#include "diffpur/classifier.hpp"
#include "diffpur/purifier.hpp"
#include "diffpur/schedule.hpp"
#include "json.hpp"

namespace diffpur {

enum class ClassifierKind { SoftmaxLinear, Mlp1 };

struct ScheduleParams {
    int T = 1000;
    double beta1 = 1e-4;
    double betaT = 2e-2;
};

struct DatasetParams {
    int num_classes = 4;
    int H = 8, W = 8, C = 1;
    int train_per_class = 125;  // 500 training images
    int eval_per_class = 50;    // 200 evaluation images
    // Benchmark geometry: contrast just above the 8/255 attack radius,
    // so in-ball attacks cannot carry an image past the midpoint between
    // class means, yet the trained net's own margins stay crossable.
    double contrast = 0.040;
    double var = 0.0016;
};

struct ClassifierParams {
    ClassifierKind kind = ClassifierKind::Mlp1;
    int hidden_dim = 32;
    double init_scale = 0.1;
    int epochs = 300;
    double lr = 0.2;
    int batch_size = 20;
};

struct RunConfig {
    std::uint64_t seed = 1234;  // master seed; every stage derives from it
    ScheduleParams schedule;
    DatasetParams dataset;
    ClassifierParams classifier;
    AttackConfig attack;
    bool purifier_enabled = true;
    PurifyConfig purify;
    int eval_subset = 0;  // 0 evaluates the whole eval split
    int workers = 1;
    std::string report_json;   // output paths; empty skips writing
    std::string records_csv;
};

void validate(const RunConfig& cfg);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

struct ImageRecord {
    int index = 0;
    int true_label = 0;
    int clean_pred = 0;     // pipeline (purifier if enabled, then classifier) on clean
    int adv_pred = 0;       // bare classifier on the attacked image
    int purified_pred = 0;  // pipeline on the attacked image
    double linf_perturbation = 0.0;
};

struct EvalTimings {
    double train_seconds = 0.0;
    double attack_seconds = 0.0;
    double purify_seconds = 0.0;
    double total_seconds = 0.0;
};

struct EvalReport {
    double standard_accuracy = 0.0;
    double robust_accuracy = 0.0;
    std::vector<ImageRecord> records;
    EvalTimings timings;
    std::uint64_t seed = 0;
    nlohmann::json config_echo;
};

/// Generate data, train the classifier, attack the evaluation split,
/// purify, and score standard (clean) and robust (attacked) accuracy of
/// the full pipeline. Deterministic given cfg.seed, apart from timings.
EvalReport evaluate(const RunConfig& cfg);

/// Console/CSV convention: accuracies carry four decimal places.
std::string format_accuracy(double v);

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& doc);

void report_write(const EvalReport& r, const std::string& json_path,
                  const std::string& csv_path);
EvalReport report_read(const std::string& json_path);

enum class SweepAxis { Tc, M, GuidanceA, RespaceK, Gamma };

SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepResult {
    SweepAxis axis = SweepAxis::Tc;
    std::vector<double> values;
    std::vector<EvalReport> reports;
};

/// One evaluate per axis value, all sharing cfg.seed so rows differ only
/// in the swept parameter.
SweepResult sweep(const RunConfig& cfg, SweepAxis axis, const std::vector<double>& values);

/// Plot-ready table: one row per swept value with both accuracies and
/// stage timings.
void sweep_write_csv(const SweepResult& s, const std::string& path);

}  // namespace diffpur

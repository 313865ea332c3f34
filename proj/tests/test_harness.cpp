#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "diffpur/errors.hpp"
#include "diffpur/harness.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace diffpur;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Small enough to evaluate in well under a second.
RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 97;
    cfg.dataset.train_per_class = 20;
    cfg.dataset.eval_per_class = 5;
    cfg.classifier.epochs = 40;
    cfg.attack.steps = 5;
    cfg.purify.Tc = 5;
    cfg.purify.M = 1;
    cfg.eval_subset = 12;
    return cfg;
}

bool same_records(const EvalReport& a, const EvalReport& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        const ImageRecord &ra = a.records[i], &rb = b.records[i];
        if (ra.index != rb.index || ra.true_label != rb.true_label ||
            ra.clean_pred != rb.clean_pred || ra.adv_pred != rb.adv_pred ||
            ra.purified_pred != rb.purified_pred ||
            ra.linf_perturbation != rb.linf_perturbation)
            return false;
    }
    return true;
}

struct TempFile {
    fs::path path;
    explicit TempFile(const std::string& suffix) {
        static int c = 0;
        path = fs::temp_directory_path() /
               ("diffpur_h_" + std::to_string(::getpid()) + "_" + std::to_string(c++) +
                suffix);
    }
    ~TempFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("run config json round-trips every field") {
    RunConfig cfg = tiny_config();
    cfg.classifier.kind = ClassifierKind::SoftmaxLinear;
    cfg.attack.kind = AttackKind::BpdaEot;
    cfg.attack.targeted = true;
    cfg.purify.guided = true;
    cfg.purify.guidance.metric = Metric::Ssim;
    cfg.purify.guidance.adv_noise = AdvNoiseMode::Frozen;
    cfg.purify.policy = Sigma2Policy::Large;
    cfg.report_json = "/tmp/x.json";

    RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(run_config_to_json(back) == run_config_to_json(cfg));
}

TEST_CASE("empty json config yields the defaults") {
    RunConfig cfg = run_config_from_json(json::object());
    RunConfig def;
    CHECK(run_config_to_json(cfg) == run_config_to_json(def));
    CHECK(cfg.dataset.H == 8);
    CHECK(cfg.attack.kind == AttackKind::Pgd);
    CHECK(cfg.purify.Tc == -1);
}

TEST_CASE("config rejects unknown enum names and bad bounds") {
    CHECK_THROWS_AS(run_config_from_json(json{{"attack", {{"kind", "fgsm"}}}}),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"classifier", {{"kind", "resnet"}}}}),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"purify", {{"sigma2", "huge"}}}}),
                    ConfigError);

    RunConfig cfg = tiny_config();
    cfg.eval_subset = 21;  // split only has 20 images
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = tiny_config();
    cfg.workers = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = tiny_config();
    cfg.purify.Tc = 5000;  // beyond the schedule
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("evaluate is reproducible apart from timings") {
    RunConfig cfg = tiny_config();
    EvalReport a = evaluate(cfg);
    EvalReport b = evaluate(cfg);
    CHECK(a.standard_accuracy == b.standard_accuracy);
    CHECK(a.robust_accuracy == b.robust_accuracy);
    CHECK(same_records(a, b));
    CHECK(a.config_echo == b.config_echo);
    CHECK(static_cast<int>(a.records.size()) == cfg.eval_subset);
    for (const ImageRecord& r : a.records) {
        CHECK(r.linf_perturbation <= cfg.attack.gamma + 1e-12);
        CHECK(r.linf_perturbation >= 0.0);
    }
}

TEST_CASE("worker count does not change the result") {
    RunConfig cfg = tiny_config();
    EvalReport a = evaluate(cfg);
    cfg.workers = 3;
    EvalReport b = evaluate(cfg);
    CHECK(a.standard_accuracy == b.standard_accuracy);
    CHECK(a.robust_accuracy == b.robust_accuracy);
    // Echo differs in the workers field only; records must agree exactly.
    CHECK(same_records(a, b));
}

TEST_CASE("no attack means robust equals standard") {
    RunConfig cfg = tiny_config();
    cfg.attack.kind = AttackKind::None;
    EvalReport r = evaluate(cfg);
    CHECK(r.robust_accuracy == r.standard_accuracy);
    for (const ImageRecord& rec : r.records) {
        CHECK(rec.purified_pred == rec.clean_pred);
        CHECK(rec.linf_perturbation == 0.0);
    }
}

TEST_CASE("disabled purifier passes attacked images straight through") {
    RunConfig cfg = tiny_config();
    cfg.purifier_enabled = false;
    EvalReport r = evaluate(cfg);
    for (const ImageRecord& rec : r.records) CHECK(rec.purified_pred == rec.adv_pred);
}

TEST_CASE("subset keeps the class balance") {
    RunConfig cfg = tiny_config();
    cfg.attack.kind = AttackKind::None;
    cfg.purifier_enabled = false;
    cfg.eval_subset = 8;  // two per class
    EvalReport r = evaluate(cfg);
    std::vector<int> per_class(4, 0);
    for (const ImageRecord& rec : r.records) ++per_class[rec.true_label];
    for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 2);
}

TEST_CASE("accuracy display uses four decimal places") {
    CHECK(format_accuracy(0.901) == "0.9010");
    CHECK(format_accuracy(1.0) == "1.0000");
    CHECK(format_accuracy(0.12344) == "0.1234");
    CHECK(format_accuracy(0.123456789) == "0.1235");
}

TEST_CASE("report write/read round-trips all fields exactly") {
    RunConfig cfg = tiny_config();
    EvalReport r = evaluate(cfg);
    TempFile jf(".json"), cf(".csv");
    report_write(r, jf.str(), cf.str());
    EvalReport back = report_read(jf.str());
    CHECK(back.standard_accuracy == r.standard_accuracy);
    CHECK(back.robust_accuracy == r.robust_accuracy);
    CHECK(back.seed == r.seed);
    CHECK(back.timings.train_seconds == r.timings.train_seconds);
    CHECK(back.timings.attack_seconds == r.timings.attack_seconds);
    CHECK(back.timings.purify_seconds == r.timings.purify_seconds);
    CHECK(back.timings.total_seconds == r.timings.total_seconds);
    CHECK(same_records(back, r));
    CHECK(back.config_echo == r.config_echo);

    // CSV has a header plus one row per record.
    std::ifstream csv(cf.str());
    std::string line;
    int lines = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 1 + static_cast<int>(r.records.size()));
}

TEST_CASE("report with no records is rejected") {
    EvalReport r;
    r.standard_accuracy = 0.5;
    r.robust_accuracy = 0.5;
    CHECK_THROWS_AS(report_write(r, "/tmp/never.json", ""), ConfigError);
}

TEST_CASE("single-value sweep matches a plain evaluate") {
    RunConfig cfg = tiny_config();
    SweepResult s = sweep(cfg, SweepAxis::M, {1.0});
    EvalReport direct = evaluate(cfg);
    REQUIRE(s.reports.size() == 1);
    CHECK(s.reports[0].standard_accuracy == direct.standard_accuracy);
    CHECK(s.reports[0].robust_accuracy == direct.robust_accuracy);
    CHECK(same_records(s.reports[0], direct));
}

TEST_CASE("sweep applies the axis and writes a csv table") {
    RunConfig cfg = tiny_config();
    SweepResult s = sweep(cfg, SweepAxis::Tc, {3.0, 8.0});
    REQUIRE(s.reports.size() == 2);
    CHECK(s.reports[0].config_echo["purify"]["Tc"] == 3);
    CHECK(s.reports[1].config_echo["purify"]["Tc"] == 8);

    TempFile cf(".csv");
    sweep_write_csv(s, cf.str());
    std::ifstream csv(cf.str());
    std::string header;
    std::getline(csv, header);
    CHECK(header ==
          "axis,value,standard_accuracy,robust_accuracy,train_seconds,attack_seconds,"
          "purify_seconds,total_seconds");
    std::string row;
    int rows = 0;
    while (std::getline(csv, row))
        if (!row.empty()) ++rows;
    CHECK(rows == 2);

    CHECK_THROWS_AS(sweep(cfg, SweepAxis::Tc, {}), ConfigError);
    CHECK_THROWS_AS(sweep(cfg, SweepAxis::Tc, {2.5}), ConfigError);
    CHECK(sweep_axis_from_name("respace_K") == SweepAxis::RespaceK);
    CHECK_THROWS_AS(sweep_axis_from_name("tc"), ConfigError);
}

TEST_CASE("gamma sweep retunes both the attack and the guidance scale") {
    RunConfig cfg = tiny_config();
    SweepResult s = sweep(cfg, SweepAxis::Gamma, {4.0 / 255.0});
    CHECK(s.reports[0].config_echo["attack"]["gamma"].get<double>() ==
          doctest::Approx(4.0 / 255.0).epsilon(1e-15));
    CHECK(s.reports[0].config_echo["purify"]["guidance"]["gamma"].get<double>() ==
          doctest::Approx(4.0 / 255.0).epsilon(1e-15));
    for (const ImageRecord& rec : s.reports[0].records)
        CHECK(rec.linf_perturbation <= 4.0 / 255.0 + 1e-12);
}

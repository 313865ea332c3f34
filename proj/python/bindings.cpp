#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffpur/attacks.hpp"
#include "diffpur/classifier.hpp"
#include "diffpur/diffusion.hpp"
#include "diffpur/errors.hpp"
#include "diffpur/guidance.hpp"
#include "diffpur/harness.hpp"
#include "diffpur/purifier.hpp"
#include "diffpur/schedule.hpp"
#include "diffpur/tensor.hpp"
#include "diffpur/tensor_io.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace diffpur;

namespace {

// The variant caster hands functions a copy, so in-place training has to
// copy back into the caller's object explicitly.
template <typename Model>
TrainHistory train_copyback(Model& m, const LabeledDataset& data, int epochs,
                            double lr, int batch_size, RandomSource& rng) {
    Classifier c = m;
    TrainHistory h = train(c, data, epochs, lr, batch_size, rng);
    m = std::get<Model>(c);
    return h;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Diffusion-based adversarial purification core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<Tensor>(m, "Tensor")
        .def(py::init<std::vector<int>>())
        .def(py::init<std::vector<int>, std::vector<double>>())
        .def_static("full", &Tensor::full)
        .def_property_readonly("shape", &Tensor::shape)
        .def_property_readonly("size", &Tensor::size)
        .def("tolist", [](const Tensor& t) { return t.data(); })
        .def("all_finite", &Tensor::all_finite)
        .def("__getitem__", [](const Tensor& t, int i) {
            if (i < 0 || i >= t.size()) throw py::index_error();
            return t[i];
        })
        .def("__len__", &Tensor::size);

    py::class_<RandomSource>(m, "RandomSource")
        .def(py::init<std::uint64_t>())
        .def("uniform", &RandomSource::uniform)
        .def("normal", &RandomSource::normal)
        .def("substream", &RandomSource::substream)
        .def_property_readonly("seed", &RandomSource::seed);

    m.def("gaussian_like", &gaussian_like);
    m.def("clamp01", &clamp01);
    m.def("linf_distance", &linf_distance);
    m.def("l2_distance", &l2_distance);

    py::enum_<Sigma2Policy>(m, "Sigma2Policy")
        .value("Small", Sigma2Policy::Small)
        .value("Large", Sigma2Policy::Large);

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_readonly("beta", &NoiseSchedule::beta)
        .def_readonly("alpha", &NoiseSchedule::alpha)
        .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
        .def_readonly("sigma2_small", &NoiseSchedule::sigma2_small)
        .def_readonly("sigma2_large", &NoiseSchedule::sigma2_large);

    py::class_<RespacedSchedule>(m, "RespacedSchedule")
        .def_readonly("K", &RespacedSchedule::K)
        .def_readonly("kept_steps", &RespacedSchedule::kept_steps)
        .def_readonly("beta_prime", &RespacedSchedule::beta_prime);

    py::class_<ReverseStep>(m, "ReverseStep")
        .def_readonly("t", &ReverseStep::t)
        .def_readonly("alpha_bar", &ReverseStep::alpha_bar)
        .def_readonly("alpha_bar_prev", &ReverseStep::alpha_bar_prev)
        .def_readonly("beta_eff", &ReverseStep::beta_eff)
        .def_readonly("sigma2_small", &ReverseStep::sigma2_small)
        .def_readonly("sigma2_large", &ReverseStep::sigma2_large);

    m.def("linear_schedule", &linear_schedule, py::arg("T"), py::arg("beta1"),
          py::arg("betaT"));
    // The respaced view borrows the parent schedule, so keep it alive.
    m.def("respace", &respace, py::keep_alive<0, 1>(), py::arg("schedule"),
          py::arg("K"));
    m.def("reverse_steps",
          py::overload_cast<const NoiseSchedule&, int>(&reverse_steps),
          py::arg("schedule"), py::arg("start_t"));
    m.def("reverse_steps",
          py::overload_cast<const RespacedSchedule&, int>(&reverse_steps),
          py::arg("respaced"), py::arg("start_t"));
    m.def("nearest_kept_at_or_above", &nearest_kept_at_or_above);

    py::class_<GaussianMixtureModel>(m, "GaussianMixtureModel")
        .def(py::init<>())
        .def_readwrite("weights", &GaussianMixtureModel::weights)
        .def_readwrite("means", &GaussianMixtureModel::means)
        .def_readwrite("var", &GaussianMixtureModel::var);
    m.def("validate_mixture",
          [](const GaussianMixtureModel& g) { validate(g); });

    py::class_<Denoiser>(m, "Denoiser");
    py::class_<GmmDenoiser, Denoiser>(m, "GmmDenoiser")
        .def(py::init<GaussianMixtureModel>())
        .def("predict_x0", &GmmDenoiser::predict_x0, py::arg("xt"),
             py::arg("alpha_bar"))
        .def_property_readonly("degenerate_fallbacks",
                               &GmmDenoiser::degenerate_fallbacks);

    m.def("gmm_posterior_mean_x0",
          [](const GaussianMixtureModel& g, const Tensor& xt, double alpha_bar) {
              return gmm_posterior_mean_x0(g, xt, alpha_bar);
          },
          py::arg("mixture"), py::arg("xt"), py::arg("alpha_bar"));

    m.def("diffuse_to", &diffuse_to, py::arg("x0"), py::arg("t"),
          py::arg("schedule"), py::arg("rng"));
    m.def("diffuse_to_with_eps", &diffuse_to_with_eps);
    m.def("forward_step", &forward_step);
    m.def("stepwise_diffuse", &stepwise_diffuse, py::arg("x0"), py::arg("t"),
          py::arg("schedule"), py::arg("rng"));
    m.def("sample",
          py::overload_cast<const Denoiser&, const NoiseSchedule&,
                            const std::vector<int>&, Sigma2Policy, RandomSource&>(
              &sample),
          py::arg("denoiser"), py::arg("schedule"), py::arg("shape"),
          py::arg("policy"), py::arg("rng"));
    m.def("sample",
          py::overload_cast<const Denoiser&, const RespacedSchedule&,
                            const std::vector<int>&, Sigma2Policy, RandomSource&>(
              &sample),
          py::arg("denoiser"), py::arg("respaced"), py::arg("shape"),
          py::arg("policy"), py::arg("rng"));

    py::enum_<Metric>(m, "Metric")
        .value("Mse", Metric::Mse)
        .value("Ssim", Metric::Ssim);
    py::enum_<AdvNoiseMode>(m, "AdvNoiseMode")
        .value("Fresh", AdvNoiseMode::Fresh)
        .value("Frozen", AdvNoiseMode::Frozen);

    py::class_<GuidanceConfig>(m, "GuidanceConfig")
        .def(py::init<>())
        .def_readwrite("metric", &GuidanceConfig::metric)
        .def_readwrite("a", &GuidanceConfig::a)
        .def_readwrite("gamma", &GuidanceConfig::gamma)
        .def_readwrite("ssim_window", &GuidanceConfig::ssim_window)
        .def_readwrite("ssim_c1", &GuidanceConfig::ssim_c1)
        .def_readwrite("ssim_c2", &GuidanceConfig::ssim_c2)
        .def_readwrite("adv_noise", &GuidanceConfig::adv_noise);

    m.def("mse", &mse);
    m.def("ssim", &ssim);
    m.def("distance", &distance);
    m.def("distance_gradient", &distance_gradient);
    m.def("guidance_scale",
          py::overload_cast<int, const NoiseSchedule&, const GuidanceConfig&>(
              &guidance_scale),
          py::arg("t"), py::arg("schedule"), py::arg("config"));
    m.def("guidance_scale_from_alpha_bar", &guidance_scale_from_alpha_bar);
    m.def("default_scale_base", &default_scale_base);

    py::class_<PurifyConfig>(m, "PurifyConfig")
        .def(py::init<>())
        .def_readwrite("Tc", &PurifyConfig::Tc)
        .def_readwrite("M", &PurifyConfig::M)
        .def_readwrite("guided", &PurifyConfig::guided)
        .def_readwrite("guidance", &PurifyConfig::guidance)
        .def_readwrite("respace_K", &PurifyConfig::respace_K)
        .def_readwrite("clamp_output", &PurifyConfig::clamp_output)
        .def_readwrite("policy", &PurifyConfig::policy)
        .def_readwrite("anchor_original", &PurifyConfig::anchor_original)
        .def_readwrite("tc_threshold", &PurifyConfig::tc_threshold);

    m.def("submersion_ratio", &submersion_ratio);
    m.def("suggest_tc", &suggest_tc, py::arg("schedule"), py::arg("gamma"),
          py::arg("threshold") = 10.0);
    m.def("resolve_start_step", &resolve_start_step);
    m.def("purify",
          [](const Tensor& x, const PurifyConfig& cfg, const Denoiser& d,
             const NoiseSchedule& s, RandomSource& rng) {
              return purify(x, cfg, d, s, rng);
          },
          py::arg("x"), py::arg("config"), py::arg("denoiser"), py::arg("schedule"),
          py::arg("rng"));

    py::class_<SoftmaxLinear>(m, "SoftmaxLinear")
        .def(py::init<>())
        .def_readwrite("input_dim", &SoftmaxLinear::input_dim)
        .def_readwrite("num_classes", &SoftmaxLinear::num_classes)
        .def_readwrite("W", &SoftmaxLinear::W)
        .def_readwrite("b", &SoftmaxLinear::b)
        .def("train", &train_copyback<SoftmaxLinear>, py::arg("data"),
             py::arg("epochs"), py::arg("lr"), py::arg("batch_size"), py::arg("rng"));

    py::class_<Mlp1>(m, "Mlp1")
        .def(py::init<>())
        .def_readwrite("input_dim", &Mlp1::input_dim)
        .def_readwrite("hidden_dim", &Mlp1::hidden_dim)
        .def_readwrite("num_classes", &Mlp1::num_classes)
        .def_readwrite("W1", &Mlp1::W1)
        .def_readwrite("b1", &Mlp1::b1)
        .def_readwrite("W2", &Mlp1::W2)
        .def_readwrite("b2", &Mlp1::b2)
        .def("train", &train_copyback<Mlp1>, py::arg("data"), py::arg("epochs"),
             py::arg("lr"), py::arg("batch_size"), py::arg("rng"));

    m.def("make_softmax_linear", &make_softmax_linear);
    m.def("make_mlp1", &make_mlp1);
    m.def("forward", &forward);
    m.def("softmax", &softmax);
    m.def("predict", &predict);
    m.def("accuracy", &accuracy);

    py::class_<LossGrad>(m, "LossGrad")
        .def_readonly("loss", &LossGrad::loss)
        .def_readonly("grad_x", &LossGrad::grad_x);
    m.def("loss_and_input_grad", &loss_and_input_grad);

    py::class_<DatasetMeta>(m, "DatasetMeta")
        .def(py::init<>())
        .def_readwrite("num_classes", &DatasetMeta::num_classes)
        .def_readwrite("H", &DatasetMeta::H)
        .def_readwrite("W", &DatasetMeta::W)
        .def_readwrite("C", &DatasetMeta::C)
        .def_readwrite("per_class", &DatasetMeta::per_class)
        .def_readwrite("contrast", &DatasetMeta::contrast)
        .def_readwrite("var", &DatasetMeta::var)
        .def_readwrite("seed", &DatasetMeta::seed);

    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def(py::init<>())
        .def_readwrite("images", &LabeledDataset::images)
        .def_readwrite("labels", &LabeledDataset::labels)
        .def_readwrite("meta", &LabeledDataset::meta);

    py::class_<TrainHistory>(m, "TrainHistory")
        .def_readonly("epoch_loss", &TrainHistory::epoch_loss);

    py::class_<GeneratedData>(m, "GeneratedData")
        .def_readonly("data", &GeneratedData::data)
        .def_readonly("mixture", &GeneratedData::mixture);

    m.def("class_mean_image", &class_mean_image);
    m.def("make_gmm_image_dataset", &make_gmm_image_dataset, py::arg("num_classes"),
          py::arg("H"), py::arg("W"), py::arg("C"), py::arg("per_class"),
          py::arg("contrast"), py::arg("var"), py::arg("rng"));

    py::enum_<AttackKind>(m, "AttackKind")
        .value("NoAttack", AttackKind::None)
        .value("Pgd", AttackKind::Pgd)
        .value("BpdaEot", AttackKind::BpdaEot)
        .value("Spsa", AttackKind::Spsa);

    py::class_<AttackConfig>(m, "AttackConfig")
        .def(py::init<>())
        .def_readwrite("kind", &AttackConfig::kind)
        .def_readwrite("gamma", &AttackConfig::gamma)
        .def_readwrite("steps", &AttackConfig::steps)
        .def_readwrite("step_size", &AttackConfig::step_size)
        .def_readwrite("targeted", &AttackConfig::targeted)
        .def_readwrite("random_start", &AttackConfig::random_start)
        .def_readwrite("eot_samples", &AttackConfig::eot_samples)
        .def_readwrite("spsa_queries", &AttackConfig::spsa_queries)
        .def_readwrite("spsa_perturb", &AttackConfig::spsa_perturb);

    m.def("project_linf", &project_linf);
    m.def("pgd", &pgd, py::arg("model"), py::arg("x"), py::arg("y"),
          py::arg("config"), py::arg("rng"));
    m.def("bpda_eot", &bpda_eot, py::arg("model"), py::arg("purifier"), py::arg("x"),
          py::arg("y"), py::arg("config"), py::arg("rng"));
    m.def("spsa",
          py::overload_cast<const Classifier&, const Tensor&, int,
                            const AttackConfig&, RandomSource&>(&spsa),
          py::arg("model"), py::arg("x"), py::arg("y"), py::arg("config"),
          py::arg("rng"));
    m.def("spsa",
          py::overload_cast<const Classifier&, const PurifyFn&, const Tensor&, int,
                            const AttackConfig&, RandomSource&>(&spsa),
          py::arg("model"), py::arg("pipeline"), py::arg("x"), py::arg("y"),
          py::arg("config"), py::arg("rng"));

    m.def("save_tensor", &save_tensor);
    m.def("load_tensor", &load_tensor);
    m.def("stack_tensors", &stack_tensors);
    m.def("unstack_tensor", &unstack_tensor);
    m.def("save_classifier", &save_classifier);
    m.def("load_classifier", &load_classifier);
    m.def("save_dataset", &save_dataset);
    m.def("load_dataset", &load_dataset);

    // The evaluation harness speaks the same JSON dialect as the CLI and
    // the on-disk reports, so strings in, strings out.
    m.def("default_config_json",
          [] { return run_config_to_json(RunConfig{}).dump(2); });
    m.def("evaluate_json", [](const std::string& config_json) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return report_to_json(evaluate(run_config_from_json(j))).dump(2);
    });
    m.def("format_accuracy", &format_accuracy);
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pbvae/certificate.hpp"
#include "pbvae/dataset.hpp"
#include "pbvae/harness.hpp"
#include "pbvae/rng.hpp"

namespace py = pybind11;

namespace {

py::array_t<std::uint8_t> load_binarised_images(const std::string& path, double threshold) {
  pbvae::IdxData raw = pbvae::load_idx(path, pbvae::kIdxImagesMagic);
  pbvae::ImageDataset ds = pbvae::binarise(raw, threshold);
  py::array_t<std::uint8_t> out({ds.count, ds.dim});
  std::copy(ds.examples.begin(), ds.examples.end(), out.mutable_data());
  return out;
}

py::array_t<double> gaussian_sample_np(std::uint64_t seed, std::vector<std::size_t> shape) {
  pbvae::RngStream rng(seed);
  pbvae::Tensor t = pbvae::gaussian_sample(rng, shape);
  py::array_t<double> out(t.shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "PAC-Bayes VAE training and risk certification core";

  m.def("binary_kl", &pbvae::binary_kl, py::arg("q"), py::arg("p"),
        "Binary KL divergence kl(q||p) between Bernoulli parameters.");
  m.def("kl_inverse", &pbvae::kl_inverse, py::arg("p"), py::arg("c"),
        "Upper inverse kl*(p|c) = sup{q in [p,1] : kl(p||q) <= c}.");
  m.def("quadratic_bound", &pbvae::quadratic_bound, py::arg("empirical_loss"),
        py::arg("budget"), "(sqrt(B) + sqrt(R + B))^2.");
  m.def("gaussian_sample", &gaussian_sample_np, py::arg("seed"), py::arg("shape"),
        "Seeded standard normal tensor.");
  m.def("load_binarised_images", &load_binarised_images, py::arg("path"),
        py::arg("threshold") = 127.5,
        "Load an IDX image file (optionally gzipped) and binarise it.");

  py::class_<pbvae::ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def_readwrite("train_images", &pbvae::ExperimentConfig::train_images)
      .def_readwrite("test_images", &pbvae::ExperimentConfig::test_images)
      .def_readwrite("binarise_threshold", &pbvae::ExperimentConfig::binarise_threshold)
      .def_readwrite("train_limit", &pbvae::ExperimentConfig::train_limit)
      .def_readwrite("prior_fraction", &pbvae::ExperimentConfig::prior_fraction)
      .def_readwrite("split_seed", &pbvae::ExperimentConfig::split_seed)
      .def_readwrite("input_dim", &pbvae::ExperimentConfig::input_dim)
      .def_readwrite("latent_dim", &pbvae::ExperimentConfig::latent_dim)
      .def_readwrite("hidden", &pbvae::ExperimentConfig::hidden)
      .def_readwrite("p_min", &pbvae::ExperimentConfig::p_min)
      .def_property(
          "prior_scheme",
          [](const pbvae::ExperimentConfig& c) { return pbvae::prior_scheme_name(c.prior_scheme); },
          [](pbvae::ExperimentConfig& c, const std::string& s) {
            c.prior_scheme = pbvae::parse_prior_scheme(s);
          })
      .def_readwrite("prior_beta", &pbvae::ExperimentConfig::prior_beta)
      .def_readwrite("prior_dropout", &pbvae::ExperimentConfig::prior_dropout)
      .def_readwrite("prior_epochs", &pbvae::ExperimentConfig::prior_epochs)
      .def_property(
          "objective",
          [](const pbvae::ExperimentConfig& c) { return pbvae::objective_name(c.objective); },
          [](pbvae::ExperimentConfig& c, const std::string& s) {
            c.objective = pbvae::parse_objective(s);
          })
      .def_readwrite("beta", &pbvae::ExperimentConfig::beta)
      .def_readwrite("sigma_phi", &pbvae::ExperimentConfig::sigma_phi)
      .def_readwrite("sigma_theta", &pbvae::ExperimentConfig::sigma_theta)
      .def_readwrite("lambda_", &pbvae::ExperimentConfig::lambda)
      .def_readwrite("epochs", &pbvae::ExperimentConfig::epochs)
      .def_readwrite("batch_size", &pbvae::ExperimentConfig::batch_size)
      .def_readwrite("learning_rate", &pbvae::ExperimentConfig::learning_rate)
      .def_readwrite("mc_samples", &pbvae::ExperimentConfig::mc_samples)
      .def_readwrite("weight_noise_samples", &pbvae::ExperimentConfig::weight_noise_samples)
      .def_readwrite("train_data", &pbvae::ExperimentConfig::train_data)
      .def_readwrite("delta", &pbvae::ExperimentConfig::delta)
      .def_readwrite("cert_mc_samples", &pbvae::ExperimentConfig::cert_mc_samples)
      .def_readwrite("randomised_samples", &pbvae::ExperimentConfig::randomised_samples)
      .def_readwrite("master_seed", &pbvae::ExperimentConfig::master_seed)
      .def_readwrite("certificate_seed", &pbvae::ExperimentConfig::certificate_seed)
      .def_readwrite("out_dir", &pbvae::ExperimentConfig::out_dir)
      .def("hash", &pbvae::config_hash);

  m.def("load_config", &pbvae::load_config, py::arg("path"));
  m.def("train_prior", &pbvae::cmd_train_prior, py::arg("config"),
        "Learn the weight prior centre; returns the checkpoint path.");
  m.def("train", &pbvae::cmd_train, py::arg("config"), py::arg("prior_checkpoint"),
        "Train the posterior; returns the checkpoint path.");
  m.def(
      "certify_json",
      [](const pbvae::ExperimentConfig& cfg, const std::string& posterior,
         const std::string& prior) {
        return pbvae::run_report_to_json(pbvae::cmd_certify(cfg, posterior, prior));
      },
      py::arg("config"), py::arg("posterior_checkpoint"), py::arg("prior_checkpoint"),
      "Evaluate certificates; returns the run report as a JSON string.");
  m.def(
      "run_pipeline_json",
      [](const pbvae::ExperimentConfig& cfg) {
        return pbvae::run_report_to_json(pbvae::run_pipeline(cfg));
      },
      py::arg("config"), "train-prior + train + certify; returns the report JSON.");
}

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mixedabc/abc.hpp"
#include "mixedabc/distfit.hpp"
#include "mixedabc/error.hpp"
#include "mixedabc/geometry.hpp"
#include "mixedabc/io.hpp"
#include "mixedabc/pipeline.hpp"
#include "mixedabc/synthetic.hpp"

namespace py = pybind11;
using namespace mixedabc;

// Structured results cross the boundary as JSON text; the Python package
// decodes them into dicts.
namespace {

std::string generate(const std::string& out_dir, std::size_t rows, std::uint64_t seed, double noise_ratio,
                     bool categoricals) {
  dataset::GeneratorConfig gc;
  gc.rows = rows;
  gc.noise_ratio = noise_ratio;
  gc.categoricals = categoricals;
  const auto [ds, gt] = dataset::generate_synthetic(gc, seed);
  const std::filesystem::path dir(out_dir);
  dataset::save_csv(ds, dir / "data.csv");
  dataset::save_schema(dataset::synthetic_schema(categoricals), dir / "schema.json");
  if (categoricals) {
    std::ostringstream tsv;
    geometry::write_embeddings(geometry::EmbeddingTable::from_map(gt.embeddings), tsv);
    io::write_file(dir / "embeddings.tsv", tsv.str());
  }
  return dataset::to_json(gt).dump();
}

std::string fit_prior(const std::vector<double>& sample, const std::vector<std::string>& candidates,
                      std::size_t n_iter, std::size_t burn_in, std::uint64_t seed) {
  std::vector<distfit::Family> families;
  for (const auto& c : candidates) families.push_back(distfit::family_from_name(c));
  if (families.empty()) families.assign(std::begin(distfit::kAllFamilies), std::end(distfit::kAllFamilies));
  distfit::McmcConfig mc;
  mc.n_iter = n_iter;
  mc.burn_in = burn_in;
  mc.seed = seed;
  return distfit::to_json(distfit::fit_prior(sample, families, mc)).dump();
}

std::string run_pipeline(const std::string& config_path, const std::string& out) {
  auto cfg = pipeline::load_config(config_path);
  if (!out.empty()) cfg.out = out;
  pipeline::validate(cfg);
  py::gil_scoped_release release;
  return pipeline::run_pipeline(cfg).report.doc.dump();
}

std::string cluster(const std::string& embeddings, int k, std::uint64_t seed) {
  const auto sim = geometry::cosine_matrix(geometry::load_embeddings(embeddings));
  return geometry::to_json(geometry::spectral_cluster(sim, k, seed)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the mixedabc package";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("generate", &generate, py::arg("out_dir"), py::arg("rows") = 4000, py::arg("seed") = 0,
        py::arg("noise_ratio") = 0.1, py::arg("categoricals") = true);
  m.def("fit_prior", &fit_prior, py::arg("sample"), py::arg("candidates") = std::vector<std::string>{},
        py::arg("n_iter") = 20000, py::arg("burn_in") = 5000, py::arg("seed") = 0);
  m.def("run_pipeline", &run_pipeline, py::arg("config"), py::arg("out") = "");
  m.def("cluster", &cluster, py::arg("embeddings"), py::arg("k") = 4, py::arg("seed") = 0);

  m.def("logistic_pdf", &abc::logistic_pdf, py::arg("d"), py::arg("mu"), py::arg("s"));
  m.def("summarize", [](const std::vector<double>& x) {
    const auto s = abc::summarize(x);
    return py::dict(py::arg("mean") = s.mean, py::arg("sd") = s.sd, py::arg("median") = s.median,
                    py::arg("q1") = s.q1, py::arg("q3") = s.q3);
  });
  m.def("weighted_quantile", [](const std::vector<double>& v, const std::vector<double>& w, double p) {
    return abc::weighted_quantile(v, w, p);
  });
}

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "debias/checkpoint.hpp"
#include "debias/config.hpp"
#include "debias/corpus.hpp"
#include "debias/datasets.hpp"
#include "debias/error.hpp"
#include "debias/evalharness.hpp"
#include "debias/geometry.hpp"
#include "debias/lexicon.hpp"
#include "debias/projection.hpp"
#include "debias/tiny_encoder.hpp"
#include "debias/tokenizer.hpp"

namespace py = pybind11;
using namespace debias;

namespace {

template <typename F>
int run_captured(F&& f, std::string& out, std::string& err) {
  std::ostringstream o;
  std::ostringstream e;
  const int code = f(o, e);
  out = o.str();
  err = e.str();
  return code;
}

KeyValueConfig kv_from(const std::filesystem::path& config,
                       const std::map<std::string, std::string>& overrides) {
  KeyValueConfig kv = KeyValueConfig::load(config);
  const auto cwd = std::filesystem::current_path();
  for (const auto& [k, v] : overrides) kv.set(k, v, cwd);
  return kv;
}

}  // namespace

PYBIND11_MODULE(_debias, m) {
  m.doc() = "Prompt-tuning debiasing toolkit: geometry, corpus, encoder, tuning and metrics.";

  auto base = py::register_exception<Error>(m, "DebiasError");
  py::register_exception<InvalidDomain>(m, "InvalidDomain", base.ptr());
  py::register_exception<OverlapError>(m, "OverlapError", base.ptr());
  py::register_exception<MismatchedTupleLength>(m, "MismatchedTupleLength", base.ptr());
  py::register_exception<EmptyCorpus>(m, "EmptyCorpus", base.ptr());
  py::register_exception<DegenerateRho>(m, "DegenerateRho", base.ptr());
  py::register_exception<DegenerateVariance>(m, "DegenerateVariance", base.ptr());
  py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<PerplexityTooLarge>(m, "PerplexityTooLarge", base.ptr());
  py::register_exception<ContextOverflow>(m, "ContextOverflow", base.ptr());

  // geometry
  m.def("conditional_distribution", &conditional_distribution, py::arg("prototype"),
        py::arg("neutral"), py::arg("rho"));
  m.def("kl_divergence", &kl_divergence, py::arg("q"), py::arg("p"));
  m.def("js_divergence", &js_divergence, py::arg("p"), py::arg("q"));
  m.def("bias_loss", &bias_loss, py::arg("attribute_prototypes"), py::arg("neutral"),
        py::arg("rho"));
  m.def(
      "representation_loss",
      [](const RowMatrix& frozen, const RowMatrix& prompted, double rho, bool hidden_softmax) {
        return representation_loss(frozen, prompted, rho,
                                   hidden_softmax ? RepresentationMode::kHiddenSoftmax
                                                  : RepresentationMode::kBatchNeighbors);
      },
      py::arg("frozen"), py::arg("prompted"), py::arg("rho"), py::arg("hidden_softmax") = false);
  m.def(
      "total_loss",
      [](double bias, double rep, double lambda) { return total_loss(bias, rep, lambda).total; },
      py::arg("bias"), py::arg("representation"), py::arg("lam") = 7.0 / 3.0);

  // lexicon and corpus
  py::class_<BiasDomain>(m, "BiasDomain")
      .def_readonly("name", &BiasDomain::name)
      .def_readonly("neutral", &BiasDomain::neutral)
      .def_property_readonly("d", &BiasDomain::d)
      .def_property_readonly("attribute_words", [](const BiasDomain& d) {
        std::vector<std::vector<std::string>> out;
        for (const auto& a : d.attributes) out.push_back(a.words);
        return out;
      });
  m.def("make_bias_domain", &make_bias_domain, py::arg("name"), py::arg("neutral"),
        py::arg("attributes"), py::arg("attribute_names") = std::vector<std::string>{});
  m.def("load_bias_domain", &load_bias_domain, py::arg("neutral_file"),
        py::arg("attribute_files"), py::arg("name") = "");

  py::class_<CorpusSlices>(m, "CorpusSlices")
      .def_property_readonly("d", &CorpusSlices::d)
      .def_property_readonly("concepts", &CorpusSlices::concepts)
      .def_property_readonly("neutral_count",
                             [](const CorpusSlices& s) { return s.neutral.size(); })
      .def("bucket_sizes", [](const CorpusSlices& s) {
        std::vector<std::vector<std::size_t>> out;
        for (const auto& a : s.attributes) {
          out.emplace_back();
          for (const auto& b : a.buckets) out.back().push_back(b.sentences.size());
        }
        return out;
      });
  m.def(
      "collect",
      [](const std::vector<std::string>& lines, const BiasDomain& domain) {
        return collect(lines, domain);
      },
      py::arg("lines"), py::arg("domain"));
  m.def("reliability_filter", &reliability_filter, py::arg("slices"), py::arg("threshold") = 30);
  m.def("quality_equalize", &quality_equalize, py::arg("slices"), py::arg("seed"));
  m.def("quantity_cap", &quantity_cap, py::arg("slices"), py::arg("cap"), py::arg("seed"));

  // encoder
  py::class_<EncoderSpec>(m, "EncoderSpec")
      .def(py::init<>())
      .def_readwrite("num_layers", &EncoderSpec::num_layers)
      .def_readwrite("hidden_size", &EncoderSpec::hidden_size)
      .def_readwrite("num_heads", &EncoderSpec::num_heads)
      .def_readwrite("vocab_size", &EncoderSpec::vocab_size)
      .def_readwrite("max_positions", &EncoderSpec::max_positions)
      .def_readwrite("intermediate_size", &EncoderSpec::intermediate_size);

  py::class_<PromptParameters>(m, "PromptParameters")
      .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("num_layers"),
           py::arg("prefix_length"), py::arg("hidden"))
      .def_static("random", &PromptParameters::random, py::arg("num_layers"),
                  py::arg("prefix_length"), py::arg("hidden"), py::arg("seed"))
      .def_property_readonly("parameter_count", &PromptParameters::parameter_count)
      .def_property(
          "flat", [](const PromptParameters& p) { return p.flat(); },
          [](PromptParameters& p, const Eigen::VectorXd& v) {
            if (v.size() != p.flat().size()) throw LengthMismatch("flat prompt size mismatch");
            p.flat() = v;
          });

  py::class_<WordPieceTokenizer>(m, "WordPieceTokenizer")
      .def_static("build", &WordPieceTokenizer::build, py::arg("words"))
      .def_property_readonly("vocab_size", &WordPieceTokenizer::vocab_size)
      .def("tokenize", [](const WordPieceTokenizer& t, const std::string& s) {
        return t.tokenize(s).token_ids;
      });

  py::class_<TinyEncoder>(m, "TinyEncoder")
      .def(py::init<EncoderSpec, std::uint64_t>(), py::arg("spec"), py::arg("seed"))
      .def("weights_checksum", &TinyEncoder::weights_checksum)
      .def(
          "encode",
          [](const TinyEncoder& e, const WordPieceTokenizer& tok, const std::string& sentence,
             const PromptParameters* prompt) {
            return e.encode(tok.tokenize(sentence), prompt).layers;
          },
          py::arg("tokenizer"), py::arg("sentence"), py::arg("prompt") = nullptr)
      .def(
          "sentence_embedding",
          [](const TinyEncoder& e, const WordPieceTokenizer& tok, const std::string& sentence,
             const PromptParameters* prompt, bool first_token) {
            return sentence_embedding(e, tok, prompt, sentence,
                                      first_token ? Pooling::kFirstToken : Pooling::kMean);
          },
          py::arg("tokenizer"), py::arg("sentence"), py::arg("prompt") = nullptr,
          py::arg("first_token") = false);

  m.def(
      "write_checkpoint",
      [](const std::filesystem::path& path, const PromptParameters& p, double lambda, double rho,
         std::uint64_t step) {
        CheckpointHeader h;
        h.num_layers = static_cast<std::uint32_t>(p.num_layers());
        h.hidden_size = static_cast<std::uint32_t>(p.hidden());
        h.prefix_length = static_cast<std::uint32_t>(p.prefix_length());
        h.lambda = lambda;
        h.rho = rho;
        h.step = step;
        write_checkpoint(path, h, p);
      },
      py::arg("path"), py::arg("prompt"), py::arg("lam"), py::arg("rho"), py::arg("step"));
  m.def(
      "read_checkpoint",
      [](const std::filesystem::path& path) {
        Checkpoint c = read_checkpoint(path);
        py::dict d;
        d["num_layers"] = c.header.num_layers;
        d["hidden_size"] = c.header.hidden_size;
        d["prefix_length"] = c.header.prefix_length;
        d["lambda"] = c.header.lambda;
        d["rho"] = c.header.rho;
        d["step"] = c.header.step;
        d["prompt"] = std::move(c.prompt);
        return d;
      },
      py::arg("path"));

  // metrics
  py::class_<SeatResult>(m, "SeatResult")
      .def_readonly("effect_size", &SeatResult::effect_size)
      .def_readonly("p_value", &SeatResult::p_value);
  m.def(
      "seat_score",
      [](const RowMatrix& x, const RowMatrix& y, const RowMatrix& a, const RowMatrix& b,
         std::uint64_t seed) {
        SeatOptions o;
        o.seed = seed;
        return seat_score(x, y, a, b, o);
      },
      py::arg("x"), py::arg("y"), py::arg("a"), py::arg("b"), py::arg("seed") = 0);
  m.def("crows_score_from_pll", &crows_score_from_pll, py::arg("plls"));
  m.def("icat_score", &icat_score, py::arg("lms"), py::arg("ss"));
  m.def(
      "stereoset_scores",
      [](const std::vector<StereoExample>& examples,
         const std::vector<std::array<double, 3>>& scores) {
        const StereoReport r = stereoset_score_from_scores(examples, scores);
        return py::make_tuple(r.overall.lms, r.overall.ss, r.overall.icat);
      },
      py::arg("examples"), py::arg("scores"));
  py::class_<StereoExample>(m, "StereoExample")
      .def_readonly("id", &StereoExample::id)
      .def_readonly("target", &StereoExample::target)
      .def_readonly("bias_type", &StereoExample::bias_type)
      .def_readonly("context", &StereoExample::context)
      .def_readonly("stereotype", &StereoExample::stereotype)
      .def_readonly("anti_stereotype", &StereoExample::anti_stereotype)
      .def_readonly("unrelated", &StereoExample::unrelated);
  m.def("load_stereoset", &load_stereoset, py::arg("path"));
  m.def(
      "load_filtered_stereoset",
      [](const std::filesystem::path& path, std::optional<std::vector<std::string>> targets) {
        return load_filtered_stereoset(path, targets ? *targets : default_stereoset_targets());
      },
      py::arg("path"), py::arg("targets") = py::none());
  m.def("project_2d", py::overload_cast<const RowMatrix&, double, std::uint64_t>(&project_2d),
        py::arg("embeddings"), py::arg("perplexity") = 30.0, py::arg("seed") = 0);

  // commands: each returns (exit code, stdout, stderr)
  auto command = [&m](const char* name, auto fn) {
    m.def(
        name,
        [fn](const std::filesystem::path& config,
             const std::map<std::string, std::string>& overrides) {
          std::string out;
          std::string err;
          int code = kExitConfig;
          try {
            const RunConfig rc = RunConfig::from(kv_from(config, overrides));
            code = run_captured([&](std::ostream& o, std::ostream& e) { return fn(rc, o, e); },
                                out, err);
          } catch (const Error& e) {
            err = e.what();
          }
          return py::make_tuple(code, out, err);
        },
        py::arg("config"), py::arg("overrides") = std::map<std::string, std::string>{});
  };
  command("cmd_prepare", [](const RunConfig& c, std::ostream& o, std::ostream& e) {
    return cmd_prepare(c, o, e);
  });
  command("cmd_tune", [](const RunConfig& c, std::ostream& o, std::ostream& e) {
    return cmd_tune(c, std::nullopt, o, e);
  });
  command("cmd_eval", [](const RunConfig& c, std::ostream& o, std::ostream& e) {
    return cmd_eval(c, EvalTarget{}, o, e);
  });
  command("cmd_report", [](const RunConfig& c, std::ostream& o, std::ostream& e) {
    return cmd_report(c, o, e);
  });
}

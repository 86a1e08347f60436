#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "famf/aggregation.hpp"
#include "famf/commands.hpp"
#include "famf/data.hpp"
#include "famf/eval.hpp"
#include "famf/fusion.hpp"
#include "famf/training.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

famf::Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) return famf::Tensor::row(std::vector<double>(a.data(), a.data() + a.shape(0)));
  if (a.ndim() != 2) throw py::value_error("expected a 1-D or 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return famf::Tensor({r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const famf::Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

famf::aggregation::AggregationParams agg_params(const Array& a, const Array& b, const Array& c,
                                                std::optional<Array> phi_w, std::optional<Array> phi_b,
                                                std::size_t ghosts) {
  famf::aggregation::AggregationParams p;
  p.a = to_tensor(a);
  p.b = to_tensor(b);
  p.c = to_tensor(c);
  p.ghosts = ghosts;
  p.clusters = p.c.rows() - ghosts;
  p.phi_w = phi_w ? to_tensor(*phi_w) : famf::Tensor::zeros(1, p.c.cols());
  p.phi_b = phi_b ? to_tensor(*phi_b) : famf::Tensor::zeros(1, 1);
  return p;
}

famf::aggregation::AttentionOptions attention_options(std::optional<std::vector<double>> phi_override,
                                                       const std::string& activation) {
  return {famf::aggregation::phi_activation_from_string(activation), std::move(phi_override)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Frame aggregation (NetVLAD / GhostVLAD / AttentionVLAD), multi-modal fusion and mAP@100";

  m.def(
      "init_aggregation",
      [](std::size_t dim, std::size_t clusters, std::size_t ghosts, double sigma, std::uint64_t seed) {
        auto p = famf::aggregation::init_params(dim, clusters, ghosts, sigma, seed);
        py::dict d;
        d["a"] = to_array(p.a);
        d["b"] = to_array(p.b);
        d["c"] = to_array(p.c);
        d["phi_w"] = to_array(p.phi_w);
        d["phi_b"] = to_array(p.phi_b);
        return d;
      },
      py::arg("dim"), py::arg("clusters"), py::arg("ghosts") = 0, py::arg("sigma") = 1.0, py::arg("seed") = 0);

  m.def(
      "soft_assign",
      [](const Array& x, const Array& a, const Array& b, const Array& c) {
        return to_array(famf::aggregation::soft_assign(to_tensor(x), agg_params(a, b, c, {}, {}, 0)));
      },
      py::arg("x"), py::arg("a"), py::arg("b"), py::arg("c"));

  m.def(
      "netvlad",
      [](const Array& x, const Array& a, const Array& b, const Array& c) {
        return to_array(famf::aggregation::netvlad(to_tensor(x), agg_params(a, b, c, {}, {}, 0)));
      },
      "D x K template", py::arg("x"), py::arg("a"), py::arg("b"), py::arg("c"));

  m.def(
      "attention_vlad",
      [](const Array& x, const Array& a, const Array& b, const Array& c, std::optional<Array> phi_w,
         std::optional<Array> phi_b, std::optional<std::vector<double>> phi_override, const std::string& activation) {
        const std::size_t ghosts = 0;
        return to_array(famf::aggregation::attention_vlad(to_tensor(x), agg_params(a, b, c, phi_w, phi_b, ghosts),
                                                          attention_options(std::move(phi_override), activation)));
      },
      py::arg("x"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("phi_w") = py::none(),
      py::arg("phi_b") = py::none(), py::arg("phi_override") = py::none(), py::arg("activation") = "sigmoid");

  m.def(
      "ghost_vlad",
      [](const Array& x, const Array& a, const Array& b, const Array& c, std::size_t ghosts) {
        return to_array(famf::aggregation::ghost_vlad(to_tensor(x), agg_params(a, b, c, {}, {}, ghosts)));
      },
      "Rows of a/c beyond clusters are ghosts", py::arg("x"), py::arg("a"), py::arg("b"), py::arg("c"),
      py::arg("ghosts"));

  m.def(
      "frame_weight_report",
      [](const Array& x, const Array& a, const Array& b, const Array& c, const Array& phi_w, const Array& phi_b) {
        return famf::aggregation::frame_weight_report(to_tensor(x), agg_params(a, b, c, phi_w, phi_b, 0));
      },
      py::arg("x"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("phi_w"), py::arg("phi_b"));

  m.def(
      "mlma",
      [](const Array& x, const Array& w_f1, const Array& w_f2) {
        return to_array(famf::fusion::mlma(to_tensor(x), {to_tensor(w_f1), to_tensor(w_f2)}));
      },
      py::arg("x"), py::arg("w_f1"), py::arg("w_f2"));

  m.def(
      "mma",
      [](const Array& x, const Array& w) { return to_array(famf::fusion::mma(to_tensor(x), {{}, to_tensor(w)})); },
      py::arg("x"), py::arg("w"));

  m.def(
      "attention_matrix_report",
      [](const Array& x, const Array& w_f1, const Array& w_f2) {
        return to_array(famf::fusion::attention_matrix_report(to_tensor(x), {to_tensor(w_f1), to_tensor(w_f2)},
                                                              famf::fusion::Variant::kMlma));
      },
      "Row i = fused row, column j = source row; columns sum to 1", py::arg("x"), py::arg("w_f1"), py::arg("w_f2"));

  m.def(
      "average_precision",
      [](const std::vector<std::uint64_t>& ranked, const std::set<std::uint64_t>& positives,
         std::optional<std::size_t> m, std::size_t cutoff) {
        return famf::eval::average_precision(ranked, positives, m.value_or(positives.size()), cutoff);
      },
      py::arg("ranked"), py::arg("positives"), py::arg("m") = py::none(), py::arg("cutoff") = 100);

  m.def(
      "map_at_100",
      [](const std::vector<std::pair<std::vector<std::uint64_t>, std::set<std::uint64_t>>>& queries) {
        std::vector<famf::eval::ScoreTable> tables;
        for (const auto& [ranked, positives] : queries) {
          famf::eval::ScoreTable t;
          for (std::size_t i = 0; i < ranked.size(); ++i)
            t.ranked.push_back({ranked[i], -static_cast<double>(i)});
          t.positives = positives;
          tables.push_back(std::move(t));
        }
        return famf::eval::map_at_100(tables);
      },
      "Each query is (ranked ids, positive ids)", py::arg("queries"));

  m.def(
      "sample_frames",
      [](const Array& features, std::size_t target, std::uint64_t seed) {
        return to_array(famf::data::sample_frames(to_tensor(features), target, seed));
      },
      py::arg("features"), py::arg("target") = 24, py::arg("seed") = 0);

  m.def(
      "lr_at",
      [](std::size_t epoch, double lr_agg, double lr_rest) {
        famf::training::Schedule s;
        s.lr_agg = lr_agg;
        s.lr_rest = lr_rest;
        const auto lr = famf::training::lr_at(s, epoch);
        return std::make_pair(lr.aggregation, lr.rest);
      },
      py::arg("epoch"), py::arg("lr_agg") = 0.04, py::arg("lr_rest") = 0.004);

  m.def(
      "run_command",
      [](const std::string& command, const std::string& config_text, const std::vector<std::string>& overrides) {
        namespace cmd = famf::commands;
        const auto cfg = famf::config::parse_run_config(config_text, overrides);
        py::gil_scoped_release release;
        if (command == "synth") return static_cast<double>(cmd::cmd_synth(cfg));
        if (command == "train") {
          const auto history = cmd::cmd_train(cfg);
          return history.empty() ? 0.0 : history.back().loss;
        }
        if (command == "eval") return cmd::cmd_eval(cfg).map;
        throw std::invalid_argument("run_command supports synth, train and eval; got '" + command + "'");
      },
      "Runs a CLI command in-process. Returns the episode count, final training loss or mAP@100.",
      py::arg("command"), py::arg("config_text"), py::arg("overrides") = std::vector<std::string>{});
}

// Acceptance run: one PASS/FAIL line per criterion. Exit status covers the
// required criteria 1-9; criterion 10 needs a pretrained encoder and is
// reported but never run here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "debias/datasets.hpp"
#include "debias/evalharness.hpp"
#include "debias/geometry.hpp"
#include "debias/tuner.hpp"
#include "support.hpp"

using namespace debias;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RowMatrix gaussian(std::mt19937_64& rng, Eigen::Index n, Eigen::Index h, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  RowMatrix m(n, h);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome distribution_validity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst_sum = 0.0;
  bool entries_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index h = 2 + trial % 31;
    const Eigen::Index n = 2 + (trial * 7) % 50;
    const double rho = std::pow(10.0, u(rng));
    const double scale = std::pow(10.0, u(rng) / 1.5);
    const RowMatrix neutral = gaussian(rng, n, h, scale);
    const Eigen::VectorXd e = gaussian(rng, 1, h, scale).row(0).transpose();
    const Eigen::VectorXd p = conditional_distribution(e, neutral, rho);
    worst_sum = std::max(worst_sum, std::abs(p.sum() - 1.0));
    entries_ok = entries_ok && p.allFinite() && p.minCoeff() > 0.0 && p.maxCoeff() <= 1.0;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |sum-1| = %.2e, entries in (0,1]: %s, %.2f s", worst_sum,
                entries_ok ? "yes" : "no", secs);
  return {worst_sum <= 1e-6 && entries_ok && secs < 10.0, buf};
}

Outcome divergence_identities() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 20;
    Eigen::VectorXd p(n), q(n);
    for (int i = 0; i < n; ++i) {
      p[i] = trial % 5 == 0 && i == 0 ? 0.0 : u(rng);
      q[i] = u(rng);
    }
    p /= p.sum();
    q /= q.sum();
    const double js = js_divergence(p, q);
    ok = ok && js == js_divergence(q, p) && js >= 0.0 && js <= 1.0;
    ok = ok && kl_divergence(p, q) >= 0.0 && std::abs(kl_divergence(p, p)) < 1e-12;
    if ((p - q).norm() > 1e-9) ok = ok && kl_divergence(p, q) > 0.0;
  }
  Eigen::VectorXd one_zero(2), zero_one(2), half(2), three_quarter(2);
  one_zero << 1, 0;
  zero_one << 0, 1;
  half << 0.5, 0.5;
  three_quarter << 0.75, 0.25;
  const double a = js_divergence(one_zero, half);
  const double b = kl_divergence(half, three_quarter);
  const double c = js_divergence(one_zero, zero_one);
  const double d = kl_divergence(one_zero, half);
  const bool examples = std::abs(a - 0.3113) < 1e-4 && std::abs(b - 0.2075) < 1e-4 &&
                        std::abs(c - 1.0) < 1e-4 && std::abs(d - 1.0) < 1e-4;
  char buf[160];
  std::snprintf(buf, sizeof buf, "JS=%.4f KL=%.4f JS=%.4f KL=%.4f, identities %s", a, b, c, d,
                ok ? "hold" : "violated");
  return {ok && examples, buf};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  const CorpusSlices slices = collect(testsupport::synthetic_corpus(3, 30), testsupport::toy_domain());
  const SlicePools pools = pools_from(slices);
  for (int cfg = 0; cfg < 20; ++cfg) {
    const auto tiny = testsupport::make_tiny(2, 8, 2, 100 + static_cast<std::uint64_t>(cfg));
    TuneConfig c;
    c.batch_size = 9 + static_cast<std::size_t>(cfg % 4) * 3;
    c.prefix_length = 4;
    c.seed = 7 + static_cast<std::uint64_t>(cfg);
    c.rho = 0.5 + 0.25 * (cfg % 5);
    c.lambda = (cfg % 3) * 0.8;
    c.layer = cfg % 2 ? LayerSelector::kAllMean : LayerSelector::kFinal;
    c.representation = cfg % 4 == 3 ? RepresentationMode::kHiddenSoftmax : RepresentationMode::kBatchNeighbors;
    const PromptTuner tuner(tiny.encoder, tiny.tokenizer, c);
    const auto batch = assemble_batch(pools, c, static_cast<std::size_t>(cfg));
    const PromptParameters prompt = PromptParameters::random(2, 4, 8, 50 + static_cast<std::uint64_t>(cfg));
    const Eigen::VectorXd g = tuner.evaluate(batch, prompt, true).gradient;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      PromptParameters plus = prompt, minus = prompt;
      plus.flat()[i] += h;
      minus.flat()[i] -= h;
      const double fd = (tuner.evaluate(batch, plus, false).loss.total -
                         tuner.evaluate(batch, minus, false).loss.total) / (2.0 * h);
      const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max relative error %.2e over 20 configurations, %.1f s", worst, secs);
  return {worst < 1e-4 && secs < 120.0, buf};
}

Outcome frozen_base() {
  const CorpusSlices slices = collect(testsupport::synthetic_corpus(4, 40), testsupport::toy_domain());
  const auto tiny = testsupport::make_tiny(2, 8, 2, 11);
  const std::uint64_t before = tiny.encoder.weights_checksum();
  TuneConfig c;
  c.batch_size = 12;
  c.prefix_length = 4;
  c.rho = 1.0;
  c.learning_rate = 0.01;
  c.seed = 3;
  c.max_epochs = 1000;
  c.max_steps = 200;
  c.checkpoint_every_steps = 100;
  const auto dir = testsupport::temp_dir("accept_frozen");
  const auto trail = tune(slices, tiny.encoder, tiny.tokenizer, c, TuneIo{dir, nullptr, {}});
  const bool steps_ok = !trail.entries.empty() && trail.entries.back().step == 200;
  const bool same = tiny.encoder.weights_checksum() == before;
  const auto t = tiny.tokenizer.tokenize("the aunt wrote a letter about poetry");
  const PromptParameters empty(2, 0, 8);
  const auto a = tiny.encoder.encode(t);
  const auto b = tiny.encoder.encode(t, &empty);
  bool identical = a.layers.size() == b.layers.size();
  for (std::size_t l = 0; identical && l < a.layers.size(); ++l) identical = a.layers[l] == b.layers[l];
  std::string detail = std::string("checksum ") + (same ? "unchanged" : "CHANGED") + " after " +
                       std::to_string(steps_ok ? 200 : 0) + " steps; k=0 output " +
                       (identical ? "bit-identical" : "differs");
  return {steps_ok && same && identical, detail};
}

Outcome parameter_budget() {
  const PromptParameters p(24, 40, 1024);
  return {p.parameter_count() == 1966080, std::to_string(p.parameter_count()) + " parameters"};
}

Outcome desk_debiasing() {
  const auto t0 = Clock::now();
  const CorpusSlices slices = collect(testsupport::synthetic_corpus(6, 60), testsupport::toy_domain());
  const SlicePools pools = pools_from(slices);
  const auto tiny = testsupport::make_tiny(2, 16, 2, 11);
  TuneConfig c;
  c.batch_size = 24;
  c.prefix_length = 4;
  c.rho = 2.0;
  c.learning_rate = 0.02;
  c.seed = 5;
  const PromptTuner tuner(tiny.encoder, tiny.tokenizer, c);
  const BatchSampler sampler(pools, c);
  // losses are measured on a fixed probe of eight batches
  std::vector<BatchItem> probe;
  for (std::size_t i = 0; i < 8; ++i) {
    const auto b = sampler.batch(i);
    probe.insert(probe.end(), b.begin(), b.end());
  }
  auto state = TrainState::initial(tiny.encoder.spec(), c);
  tuner.train_step(state, sampler.batch(0));
  const LossBreakdown first = tuner.evaluate(probe, state.prompt, false).loss;
  for (std::size_t step = 1; step < 500; ++step) tuner.train_step(state, sampler.batch(step));
  const LossBreakdown last = tuner.evaluate(probe, state.prompt, false).loss;
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "bias %.4f -> %.4f (%.0f%% drop), representation %.4f -> %.4f, %.1f s",
                first.bias, last.bias, 100.0 * (1.0 - last.bias / first.bias), first.representation,
                last.representation, secs);
  return {last.bias <= 0.5 * first.bias && last.representation < 2.0 * first.representation && secs < 300.0,
          buf};
}

Outcome corpus_procedures() {
  const BiasDomain domain = testsupport::toy_domain();
  std::vector<std::string> lines;
  std::mt19937 rng(9);
  // uneven bucket sizes, one concept short of the threshold on one side
  const std::vector<std::pair<std::string, int>> sizes = {
      {"uncle", 2600}, {"father", 3100}, {"aunt", 2400}, {"mother", 20}};
  for (const auto& [w, n] : sizes)
    for (int i = 0; i < n; ++i) lines.push_back("line " + std::to_string(i) + " about the " + w + " and science");
  CorpusSlices s = collect(lines, domain);
  const CorpusSlices r = reliability_filter(s, 30);
  bool ok = r.concepts() == 1 && r.attributes[0].buckets[0].word == "uncle";
  for (const auto& a : r.attributes)
    for (const auto& b : a.buckets) ok = ok && b.sentences.size() >= 30;
  const CorpusSlices q = quality_equalize(r, 1);
  for (std::size_t m = 0; m < q.concepts(); ++m)
    ok = ok && q.attributes[0].buckets[m].sentences.size() == q.attributes[1].buckets[m].sentences.size();
  // caps on the unfiltered corpus plus one on the filtered one
  std::string detail = "reliability/equalize ok=" + std::string(ok ? "yes" : "no") + "; caps";
  for (const std::size_t cap : {100u, 1000u, 10000u}) {
    const CorpusSlices c = quantity_cap(s, cap, 2);
    for (std::size_t i = 0; i < c.d(); ++i) {
      const std::size_t want = std::min(cap, s.attributes[i].total());
      ok = ok && c.attributes[i].total() == want;
      detail += " " + std::to_string(c.attributes[i].total()) + "/" + std::to_string(want);
    }
  }
  return {ok, detail};
}

Outcome metric_oracles() {
  RowMatrix x(2, 2), y(2, 2), a(1, 2), b(1, 2);
  x << 1, 0, 1, 0;
  y << 0, 1, 0, 1;
  a << 1, 0;
  b << 0, 1;
  const SeatResult seat = seat_score(x, y, a, b);
  const bool seat_ok = std::abs(seat.effect_size - 2.0) <= 1e-9 && seat.p_value == 1.0 / 6.0;
  const double c100 = crows_score_from_pll({{-1, -2}, {-1, -3}});
  const double c50 = crows_score_from_pll({{-1, -1}, {-2, -2}});
  const double c66 = crows_score_from_pll({{-1, -2}, {-1, -2}, {-3, -2}});
  const bool crows_ok = c100 == 100.0 && c50 == 50.0 && std::round(c66 * 100.0) / 100.0 == 66.67;
  bool icat_ok = true;
  for (double lms : {0.0, 33.3, 84.652, 100.0})
    for (double ss : {0.0, 12.5, 50.0, 56.019, 100.0})
      icat_ok = icat_ok && icat_score(lms, ss) == lms * std::min(ss, 100.0 - ss) / 50.0;
  const double icat = icat_score(84.652, 56.019);
  icat_ok = icat_ok && std::abs(icat - 74.462) <= 0.01;
  char buf[200];
  std::snprintf(buf, sizeof buf, "SEAT effect %.12f p %.6f; CrowS %.2f/%.2f/%.2f; ICAT %.3f", seat.effect_size,
                seat.p_value, c100, c50, c66, icat);
  return {seat_ok && crows_ok && icat_ok, buf};
}

Outcome filtered_stereoset() {
  const char* env = std::getenv("DEBIAS_STEREOSET_PATH");
  if (env != nullptr && *env != '\0' && std::filesystem::exists(env)) {
    const auto examples = load_filtered_stereoset(env);
    std::size_t gender = 0;
    for (const auto& e : examples) gender += e.bias_type == "gender";
    return {gender == 149 && examples.size() == 149,
            "published dataset: " + std::to_string(gender) + " gender examples (expected 149)"};
  }
  const auto path = std::filesystem::path(DEBIAS_DATA_DIR) / "benchmarks" / "stereoset_mini.json";
  const auto examples = load_filtered_stereoset(path);
  std::size_t gender = 0;
  for (const auto& e : examples) gender += e.bias_type == "gender";
  return {examples.size() == 10 && gender == 10,
          "published dataset absent (set DEBIAS_STEREOSET_PATH); mini dataset: " + std::to_string(gender) +
              " of 20 examples kept (expected 10)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, distribution_validity}, {2, divergence_identities}, {3, gradient_check},
      {4, frozen_base},           {5, parameter_budget},      {6, desk_debiasing},
      {7, corpus_procedures},     {8, metric_oracles},        {9, filtered_stereoset}};
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("FAIL 10 not run: needs a pretrained encoder adapter and the full benchmarks (optional)\n");
  return failures == 0 ? 0 : 1;
}

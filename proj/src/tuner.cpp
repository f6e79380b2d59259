#include "debias/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "debias/checkpoint.hpp"
#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace {

constexpr char kStateMagic[4] = {'D', 'B', 'T', 'S'};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

const std::vector<SentenceRecord>& pool_of(const SlicePools& pools, int slice) {
  return slice < 0 ? pools.neutral : pools.attributes[static_cast<std::size_t>(slice)];
}

std::string checkpoint_name(std::size_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(8) << std::setfill('0') << step << ".bin";
  return os.str();
}

void write_doubles(std::ofstream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, Eigen::VectorXd& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw CheckpointError("truncated train state");
}

}  // namespace

void TuneConfig::validate(std::size_t d) const {
  auto fail = [](const std::string& m) { throw InvalidConfig(m); };
  if (d < 2) fail("a bias domain needs d >= 2 attributes, got " + std::to_string(d));
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (!(rho > 0.0) || !std::isfinite(rho)) fail("rho must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (prefix_length == 0) fail("prefix_length is 0: nothing to train");
  if (checkpoint_every_steps == 0) fail("checkpoint_every_steps must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  if (clip_norm < 0.0) fail("clip_norm must be >= 0");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    fail("heldout_fraction must lie in [0, 1)");
  }
  if (batch_size <= d * per_attribute(d)) {
    fail("batch_size " + std::to_string(batch_size) + " leaves no room for neutral sentences with " +
         std::to_string(d) + " attributes");
  }
}

std::size_t TuneConfig::per_attribute(std::size_t d) const { return ceil_div(batch_size, d + 1); }

std::string TuneConfig::describe() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "lambda = " << lambda << '\n'
     << "rho = " << rho << '\n'
     << "learning_rate = " << learning_rate << '\n'
     << "batch_size = " << batch_size << '\n'
     << "prefix_length = " << prefix_length << '\n'
     << "max_epochs = " << max_epochs << '\n'
     << "checkpoint_every_steps = " << checkpoint_every_steps << '\n'
     << "seed = " << seed << '\n'
     << "layer = " << (layer == LayerSelector::kFinal ? "final" : "all-mean") << '\n'
     << "representation = "
     << (representation == RepresentationMode::kBatchNeighbors ? "batch-neighbors"
                                                               : "hidden-softmax")
     << '\n'
     << "beta1 = " << beta1 << '\n'
     << "beta2 = " << beta2 << '\n'
     << "epsilon = " << epsilon << '\n'
     << "clip_norm = " << clip_norm << '\n'
     << "heldout_fraction = " << heldout_fraction << '\n'
     << "max_steps = " << max_steps << '\n';
  return os.str();
}

SlicePools pools_from(const CorpusSlices& slices) {
  SlicePools pools;
  pools.neutral = slices.neutral;
  for (const auto& a : slices.attributes) {
    std::vector<SentenceRecord> flat;
    for (const auto& b : a.buckets) flat.insert(flat.end(), b.sentences.begin(), b.sentences.end());
    pools.attributes.push_back(std::move(flat));
  }
  return pools;
}

std::pair<SlicePools, SlicePools> split_heldout(const SlicePools& pools, double fraction,
                                                std::uint64_t seed) {
  auto split = [&](const std::vector<SentenceRecord>& pool, int id,
                   std::vector<SentenceRecord>& train, std::vector<SentenceRecord>& held) {
    const std::size_t n = pool.size();
    std::size_t h = 0;
    if (fraction > 0.0 && n >= 2) {
      h = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
      h = std::min(h, n - 1);
    }
    Rng rng(derive_seed(seed, "heldout", static_cast<std::uint64_t>(id + 1)));
    const auto chosen = rng.sample_sorted(n, h);
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (c < chosen.size() && chosen[c] == i) {
        held.push_back(pool[i]);
        ++c;
      } else {
        train.push_back(pool[i]);
      }
    }
  };
  SlicePools train, held;
  split(pools.neutral, -1, train.neutral, held.neutral);
  for (std::size_t i = 0; i < pools.attributes.size(); ++i) {
    train.attributes.emplace_back();
    held.attributes.emplace_back();
    split(pools.attributes[i], static_cast<int>(i), train.attributes.back(), held.attributes.back());
  }
  return {std::move(train), std::move(held)};
}

BatchSampler::BatchSampler(const SlicePools& pools, const TuneConfig& config)
    : pools_(pools), seed_(config.seed) {
  const std::size_t d = pools.attributes.size();
  config.validate(d);
  if (pools.neutral.empty()) throw InsufficientCorpus("neutral slice is empty");
  std::size_t smallest = SIZE_MAX;
  for (std::size_t i = 0; i < d; ++i) {
    if (pools.attributes[i].empty()) {
      throw InsufficientCorpus("attribute slice " + std::to_string(i) + " is empty");
    }
    smallest = std::min(smallest, pools.attributes[i].size());
  }
  per_attribute_ = config.per_attribute(d);
  neutral_count_ = config.batch_size - d * per_attribute_;
  steps_per_epoch_ = ceil_div(smallest, per_attribute_);
}

std::size_t BatchSampler::draw(int pool, std::size_t epoch, std::size_t index) const {
  const std::size_t n = pool_of(pools_, pool).size();
  const std::size_t block = index / n;
  const auto key = std::make_tuple(pool, epoch, block);
  auto it = perms_.find(key);
  if (it == perms_.end()) {
    if (perms_.size() > 64) perms_.clear();
    Rng rng(derive_seed(seed_, "batch", static_cast<std::uint64_t>(pool + 1),
                        (static_cast<std::uint64_t>(epoch) << 32) ^ block));
    it = perms_.emplace(key, rng.permutation(n)).first;
  }
  return it->second[index % n];
}

std::vector<BatchItem> BatchSampler::batch(std::size_t step) const {
  const std::size_t epoch = step / steps_per_epoch_;
  const std::size_t local = step % steps_per_epoch_;
  std::vector<BatchItem> out;
  for (std::size_t i = 0; i < pools_.attributes.size(); ++i) {
    const int pool = static_cast<int>(i);
    for (std::size_t j = 0; j < per_attribute_; ++j) {
      const std::size_t idx = draw(pool, epoch, local * per_attribute_ + j);
      out.push_back(BatchItem{&pools_.attributes[i][idx], pool});
    }
  }
  for (std::size_t j = 0; j < neutral_count_; ++j) {
    const std::size_t idx = draw(-1, epoch, local * neutral_count_ + j);
    out.push_back(BatchItem{&pools_.neutral[idx], -1});
  }
  return out;
}

std::vector<BatchItem> assemble_batch(const SlicePools& pools, const TuneConfig& config,
                                      std::size_t step) {
  return BatchSampler(pools, config).batch(step);
}

TrainState TrainState::initial(const EncoderSpec& spec, const TuneConfig& config) {
  TrainState s;
  s.prompt = PromptParameters::random(spec.num_layers, config.prefix_length, spec.hidden_size,
                                      derive_seed(config.seed, "prompt"));
  s.adam_m = Eigen::VectorXd::Zero(s.prompt.flat().size());
  s.adam_v = Eigen::VectorXd::Zero(s.prompt.flat().size());
  return s;
}

void write_train_state(const std::filesystem::path& path, const TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write train state: " + path.string());
  out.write(kStateMagic, 4);
  const std::uint64_t header[5] = {state.step, state.epoch, state.prompt.num_layers(),
                                   state.prompt.prefix_length(), state.prompt.hidden()};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  write_doubles(out, state.prompt.flat());
  write_doubles(out, state.adam_m);
  write_doubles(out, state.adam_v);
}

TrainState read_train_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open train state: " + path.string());
  char magic[4];
  std::uint64_t header[5];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || std::memcmp(magic, kStateMagic, 4) != 0) {
    throw CheckpointError("not a train state file: " + path.string());
  }
  TrainState s;
  s.step = header[0];
  s.epoch = header[1];
  s.prompt = PromptParameters(header[2], header[3], header[4]);
  s.adam_m = Eigen::VectorXd::Zero(s.prompt.flat().size());
  s.adam_v = Eigen::VectorXd::Zero(s.prompt.flat().size());
  read_doubles(in, s.prompt.flat());
  read_doubles(in, s.adam_m);
  read_doubles(in, s.adam_v);
  return s;
}

PromptTuner::PromptTuner(const DifferentiableEncoder& encoder, const Tokenizer& tokenizer,
                         TuneConfig config)
    : encoder_(encoder), tokenizer_(tokenizer), config_(config) {}

const TokenizedSentence& PromptTuner::tokens(const SentenceRecord& record) const {
  auto it = token_cache_.find(&record);
  if (it != token_cache_.end()) return it->second;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& m : record.matches) spans.emplace_back(m.begin, m.end);
  return token_cache_.emplace(&record, tokenizer_.tokenize(record.text, spans)).first->second;
}

const RowMatrix& PromptTuner::frozen_embeddings(const SentenceRecord& record) const {
  auto it = frozen_cache_.find(&record);
  if (it != frozen_cache_.end()) return it->second;
  const TokenizedSentence& t = tokens(record);
  const LayerStates states = encoder_.encode(t);
  RowMatrix out(static_cast<Eigen::Index>(t.word_spans.size()),
                static_cast<Eigen::Index>(states.hidden()));
  for (std::size_t m = 0; m < t.word_spans.size(); ++m) {
    out.row(static_cast<Eigen::Index>(m)) = word_embedding(states, t.word_spans[m], config_.layer).transpose();
  }
  return frozen_cache_.emplace(&record, std::move(out)).first->second;
}

StepResult PromptTuner::evaluate(const std::vector<BatchItem>& batch,
                                 const PromptParameters& prompt, bool with_gradient) const {
  const auto H = static_cast<Eigen::Index>(encoder_.spec().hidden_size);
  const std::size_t L = encoder_.spec().num_layers;

  std::vector<Occurrence> occ;
  std::size_t d = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& item = batch[i];
    for (std::size_t m = 0; m < item.record->matches.size(); ++m) {
      const auto& ref = item.record->matches[m].ref;
      occ.push_back(Occurrence{i, m, item.slice, item.slice < 0 ? ref.index : ref.attribute});
    }
    if (item.slice >= 0) d = std::max(d, static_cast<std::size_t>(item.slice) + 1);
  }
  const auto n = static_cast<Eigen::Index>(occ.size());

  // Forward passes.
  std::vector<std::unique_ptr<EncoderTrace>> traces(batch.size());
  std::vector<LayerStates> plain(batch.size());
  auto states_of = [&](std::size_t i) -> const LayerStates& {
    return with_gradient ? traces[i]->states() : plain[i];
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TokenizedSentence& t = tokens(*batch[i].record);
    if (with_gradient) {
      traces[i] = encoder_.forward(t, prompt);
    } else {
      plain[i] = encoder_.encode(t, &prompt);
    }
  }
  RowMatrix frozen(n, H), prompted(n, H);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& o = occ[static_cast<std::size_t>(r)];
    const auto& rec = *batch[o.item].record;
    frozen.row(r) = frozen_embeddings(rec).row(static_cast<Eigen::Index>(o.match));
    prompted.row(r) =
        word_embedding(states_of(o.item), tokens(rec).word_spans[o.match], config_.layer).transpose();
  }

  // Prototypes: per neutral word, per attribute.
  std::map<std::size_t, std::vector<Eigen::Index>> neutral_groups;
  std::vector<std::vector<Eigen::Index>> attribute_groups(d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& o = occ[static_cast<std::size_t>(r)];
    if (o.slice < 0) {
      neutral_groups[o.group].push_back(r);
    } else {
      attribute_groups[static_cast<std::size_t>(o.slice)].push_back(r);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (attribute_groups[i].empty()) {
      throw InsufficientCorpus("batch has no occurrence of attribute " + std::to_string(i));
    }
  }
  auto group_mean = [&](const std::vector<Eigen::Index>& rows) {
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(H);
    for (auto r : rows) s += prompted.row(r);
    return Eigen::RowVectorXd(s / static_cast<double>(rows.size()));
  };
  RowMatrix attr_protos(static_cast<Eigen::Index>(d), H);
  for (std::size_t i = 0; i < d; ++i) attr_protos.row(static_cast<Eigen::Index>(i)) = group_mean(attribute_groups[i]);
  RowMatrix neutral_protos(static_cast<Eigen::Index>(neutral_groups.size()), H);
  {
    Eigen::Index j = 0;
    for (const auto& [word, rows] : neutral_groups) neutral_protos.row(j++) = group_mean(rows);
  }

  StepResult result;
  RowMatrix d_prompted = RowMatrix::Zero(n, H);
  double bias = 0.0;
  if (d >= 2 && neutral_protos.rows() >= 2) {
    if (with_gradient) {
      const auto g = bias_loss_with_gradient(attr_protos, neutral_protos, config_.rho);
      bias = g.value;
      for (std::size_t i = 0; i < d; ++i) {
        const auto& rows = attribute_groups[i];
        for (auto r : rows) {
          d_prompted.row(r) += g.d_attribute.row(static_cast<Eigen::Index>(i)) / static_cast<double>(rows.size());
        }
      }
      Eigen::Index j = 0;
      for (const auto& [word, rows] : neutral_groups) {
        for (auto r : rows) d_prompted.row(r) += g.d_neutral.row(j) / static_cast<double>(rows.size());
        ++j;
      }
    } else {
      bias = bias_loss(attr_protos, neutral_protos, config_.rho);
    }
  }
  double rep = 0.0;
  if (n >= 2) {
    if (with_gradient) {
      const auto g = representation_loss_with_gradient(frozen, prompted, config_.rho,
                                                       config_.representation);
      rep = g.value;
      d_prompted += config_.lambda * g.d_prompted;
    } else {
      rep = representation_loss(frozen, prompted, config_.rho, config_.representation);
    }
  }
  result.loss = total_loss(bias, rep, config_.lambda);

  if (!with_gradient) return result;

  result.gradient = Eigen::VectorXd::Zero(prompt.flat().size());
  std::vector<std::vector<Eigen::Index>> rows_by_item(batch.size());
  for (Eigen::Index r = 0; r < n; ++r) rows_by_item[occ[static_cast<std::size_t>(r)].item].push_back(r);
  const std::size_t first_layer = config_.layer == LayerSelector::kFinal ? L : 0;
  const double layer_weight = config_.layer == LayerSelector::kFinal ? 1.0 : 1.0 / static_cast<double>(L + 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (rows_by_item[i].empty()) continue;
    const auto& t = tokens(*batch[i].record);
    const auto T = static_cast<Eigen::Index>(t.size());
    RowMatrix grad = RowMatrix::Zero(T, H);
    for (auto r : rows_by_item[i]) {
      const TokenSpan span = t.word_spans[occ[static_cast<std::size_t>(r)].match];
      const double w = layer_weight / static_cast<double>(span.size());
      for (std::size_t p = span.begin; p < span.end; ++p) {
        grad.row(static_cast<Eigen::Index>(p)) += w * d_prompted.row(r);
      }
    }
    std::vector<RowMatrix> state_grads(L + 1);
    for (std::size_t l = first_layer; l <= L; ++l) state_grads[l] = grad;
    encoder_.backward(*traces[i], state_grads, prompt, result.gradient);
  }
  result.grad_norm = result.gradient.norm();
  return result;
}

LossBreakdown PromptTuner::train_step(TrainState& state, const std::vector<BatchItem>& batch) const {
  StepResult r = evaluate(batch, state.prompt, true);
  if (!std::isfinite(r.loss.total) || !std::isfinite(r.grad_norm)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step + 1 << ": bias=" << r.loss.bias
       << " representation=" << r.loss.representation << " grad_norm=" << r.grad_norm;
    throw NonFiniteLoss(os.str(), r.loss.bias, r.loss.representation, r.grad_norm);
  }
  if (config_.clip_norm > 0.0 && r.grad_norm > config_.clip_norm) {
    r.gradient *= config_.clip_norm / r.grad_norm;
  }
  const double t = static_cast<double>(state.step + 1);
  state.adam_m = config_.beta1 * state.adam_m + (1.0 - config_.beta1) * r.gradient;
  state.adam_v = config_.beta2 * state.adam_v +
                 (1.0 - config_.beta2) * r.gradient.cwiseProduct(r.gradient);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  state.prompt.flat().array() -=
      config_.learning_rate * (state.adam_m.array() / c1) /
      ((state.adam_v.array() / c2).sqrt() + config_.epsilon);
  ++state.step;
  state.last_loss = r.loss;
  state.last_grad_norm = r.grad_norm;
  return r.loss;
}

std::vector<std::size_t> checkpoint_schedule(std::size_t total_steps, std::size_t every,
                                             std::size_t steps_per_epoch) {
  std::set<std::size_t> steps = {0, total_steps};
  for (std::size_t s = every; every > 0 && s <= total_steps; s += every) steps.insert(s);
  for (std::size_t s = steps_per_epoch; steps_per_epoch > 0 && s <= total_steps; s += steps_per_epoch) {
    steps.insert(s);
  }
  return {steps.begin(), steps.end()};
}

void write_trail(const std::filesystem::path& path, const CheckpointTrail& trail) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write trail: " + path.string());
  out << std::setprecision(17);
  out << "step\tpath\tbias\trepresentation\tlambda\ttotal\n";
  for (const auto& e : trail.entries) {
    out << e.step << '\t' << e.path.string() << '\t' << e.eval.bias << '\t'
        << e.eval.representation << '\t' << e.eval.lambda << '\t' << e.eval.total << '\n';
  }
}

CheckpointTrail read_trail(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open trail: " + path.string());
  CheckpointTrail trail;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    TrailEntry e;
    std::string p;
    if (!(is >> e.step) || !(is.ignore(1), std::getline(is, p, '\t')) ||
        !(is >> e.eval.bias >> e.eval.representation >> e.eval.lambda >> e.eval.total)) {
      throw CheckpointError("malformed trail line: " + line);
    }
    e.path = p;
    trail.entries.push_back(std::move(e));
  }
  return trail;
}

const TrailEntry& select_checkpoint(const CheckpointTrail& trail, CheckpointPolicy policy,
                                    std::size_t early_step) {
  if (trail.entries.empty()) throw EmptyTrail("checkpoint trail is empty");
  if (policy == CheckpointPolicy::kFinal) return trail.entries.back();
  for (const auto& e : trail.entries) {
    if (e.step >= early_step) return e;
  }
  return trail.entries.back();
}

CheckpointTrail tune(const CorpusSlices& slices, const DifferentiableEncoder& encoder,
                     const Tokenizer& tokenizer, const TuneConfig& config, const TuneIo& io) {
  config.validate(slices.d());
  const EncoderSpec& spec = encoder.spec();
  const auto [train, held] = split_heldout(pools_from(slices), config.heldout_fraction,
                                           derive_seed(config.seed, "split"));
  const BatchSampler sampler(train, config);
  const PromptTuner tuner(encoder, tokenizer, config);

  // Fixed evaluation batch from the held-out pools; falls back to the first
  // training batch when a held-out pool is empty.
  std::vector<BatchItem> eval_batch;
  bool held_ok = !held.neutral.empty();
  for (const auto& a : held.attributes) held_ok = held_ok && !a.empty();
  if (held_ok) {
    const std::size_t per = config.per_attribute(slices.d());
    for (std::size_t i = 0; i < held.attributes.size(); ++i) {
      for (std::size_t j = 0; j < std::min(per, held.attributes[i].size()); ++j) {
        eval_batch.push_back(BatchItem{&held.attributes[i][j], static_cast<int>(i)});
      }
    }
    const std::size_t nn = config.batch_size - slices.d() * per;
    for (std::size_t j = 0; j < std::min(nn, held.neutral.size()); ++j) {
      eval_batch.push_back(BatchItem{&held.neutral[j], -1});
    }
  } else {
    eval_batch = sampler.batch(0);
  }

  std::filesystem::create_directories(io.checkpoint_dir);
  {
    std::ofstream cfg(io.checkpoint_dir / "tune_config.txt");
    cfg << config.describe();
  }

  const std::size_t spe = sampler.steps_per_epoch();
  std::size_t total = config.max_epochs * spe;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  const auto schedule = checkpoint_schedule(total, config.checkpoint_every_steps, spe);
  const std::set<std::size_t> schedule_set(schedule.begin(), schedule.end());

  CheckpointTrail trail;
  TrainState state;
  const auto trail_path = io.checkpoint_dir / "trail.tsv";

  auto checkpoint = [&](const TrainState& s) {
    const auto path = io.checkpoint_dir / checkpoint_name(s.step);
    CheckpointHeader h;
    h.num_layers = static_cast<std::uint32_t>(spec.num_layers);
    h.hidden_size = static_cast<std::uint32_t>(spec.hidden_size);
    h.prefix_length = static_cast<std::uint32_t>(config.prefix_length);
    h.lambda = config.lambda;
    h.rho = config.rho;
    h.step = s.step;
    write_checkpoint(path, h, s.prompt);
    write_train_state(std::filesystem::path(path).replace_extension(".state"), s);
    {
      std::ofstream side(std::filesystem::path(path).replace_extension(".cfg"));
      side << "step = " << s.step << '\n' << config.describe();
    }
    const LossBreakdown eval = tuner.evaluate(eval_batch, s.prompt, false).loss;
    trail.entries.push_back(TrailEntry{s.step, path, eval});
    write_trail(trail_path, trail);
  };

  if (io.resume_state) {
    state = read_train_state(*io.resume_state);
    if (state.prompt.num_layers() != spec.num_layers || state.prompt.hidden() != spec.hidden_size ||
        state.prompt.prefix_length() != config.prefix_length) {
      throw CheckpointError("resume state does not match the encoder/config");
    }
    if (std::filesystem::exists(trail_path)) {
      for (auto& e : read_trail(trail_path).entries) {
        if (e.step <= state.step) trail.entries.push_back(std::move(e));
      }
    }
  } else {
    state = TrainState::initial(spec, config);
    checkpoint(state);
  }

  while (state.step < total) {
    const auto batch = sampler.batch(state.step);
    state.epoch = state.step / spe;
    const LossBreakdown loss = tuner.train_step(state, batch);
    if (io.metrics) {
      *io.metrics << state.step << '\t' << std::setprecision(10) << loss.bias << '\t'
                  << loss.representation << '\t' << loss.total << '\t' << state.last_grad_norm
                  << '\n';
    }
    if (schedule_set.count(state.step)) checkpoint(state);
  }
  return trail;
}

}  // namespace debias

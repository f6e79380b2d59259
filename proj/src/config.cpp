#include "debias/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "debias/checkpoint.hpp"
#include "debias/corpus.hpp"
#include "debias/datasets.hpp"
#include "debias/error.hpp"
#include "debias/lexicon.hpp"
#include "debias/projection.hpp"
#include "debias/rng.hpp"
#include "debias/tiny_encoder.hpp"
#include "debias/tokenizer.hpp"

namespace debias {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidConfig(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string l = to_lower_ascii(v);
  if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
  if (l == "false" || l == "no" || l == "off" || l == "0") return false;
  throw InvalidConfig(key + ": expected true/false, got '" + v + "'");
}

std::size_t to_cap(const std::string& key, const std::string& v) {
  const std::string l = to_lower_ascii(v);
  if (l == "inf" || l == "none" || l == "0") return 0;
  return to_size(key, v);
}

// ---------------------------------------------------------------------------
// pipeline pieces shared by the commands

BiasDomain load_domain(const RunConfig& c) {
  return load_bias_domain(c.neutral_words, c.attribute_words, c.domain_name);
}

std::vector<std::string> read_corpus_lines(const RunConfig& c) {
  std::vector<std::string> lines;
  for (const auto& f : c.corpus_files) {
    std::ifstream in(f);
    if (!in) throw InvalidConfig("cannot open corpus file " + f.string());
    std::string line;
    while (std::getline(in, line)) lines.push_back(std::move(line));
  }
  return lines;
}

fs::path vocab_path(const RunConfig& c) { return c.out_dir / "vocab.txt"; }

/// Lexicon words plus the most frequent corpus words (ties by spelling).
WordPieceTokenizer build_tokenizer(const RunConfig& c, const BiasDomain& domain,
                                   const CorpusSlices& slices) {
  std::vector<std::string> words = domain.neutral;
  for (const auto& a : domain.attributes) words.insert(words.end(), a.words.begin(), a.words.end());
  std::map<std::string, std::size_t> freq;
  auto count = [&](const SentenceRecord& r) {
    std::istringstream in(to_lower_ascii(r.text));
    std::string w;
    while (in >> w) ++freq[w];
  };
  std::set<std::string> seen;
  for (const auto& r : slices.neutral) {
    if (seen.insert(r.text).second) count(r);
  }
  for (const auto& a : slices.attributes) {
    for (const auto& b : a.buckets) {
      for (const auto& r : b.sentences) {
        if (seen.insert(r.text).second) count(r);
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  for (std::size_t i = 0; i < std::min(c.vocab_words, ranked.size()); ++i) {
    words.push_back(ranked[i].first);
  }
  return WordPieceTokenizer::build(words);
}

WordPieceTokenizer load_tokenizer(const RunConfig& c) {
  if (!fs::exists(vocab_path(c))) {
    throw InvalidConfig("no vocabulary at " + vocab_path(c).string() + "; run prepare first");
  }
  return WordPieceTokenizer::load(vocab_path(c));
}

TinyEncoder make_encoder(const RunConfig& c, const Tokenizer& tokenizer) {
  EncoderSpec spec = c.encoder;
  spec.vocab_size = tokenizer.vocab_size();
  TinyEncoder enc(spec, c.derived_seed("encoder"));
  enc.set_mask_token_id(WordPieceTokenizer::kMask);
  return enc;
}

CorpusSlices load_slices(const RunConfig& c, const BiasDomain& domain) {
  if (!fs::exists(c.slices_dir() / "manifest.tsv")) {
    throw InvalidConfig("no corpus slices in " + c.slices_dir().string() + "; run prepare first");
  }
  return read_slices(c.slices_dir(), domain);
}

PromptParameters checked_prompt(const fs::path& path, const EncoderSpec& spec) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.header.num_layers != spec.num_layers || ck.header.hidden_size != spec.hidden_size) {
    throw CheckpointError("checkpoint " + path.string() + " does not fit the encoder (L=" +
                          std::to_string(ck.header.num_layers) +
                          ", H=" + std::to_string(ck.header.hidden_size) + ")");
  }
  return std::move(ck.prompt);
}

int guarded(std::ostream& err, int parse_code, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const InvalidConfig& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidDomain& e) {
    err << "lexicon error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MismatchedTupleLength& e) {
    err << "lexicon error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const OverlapError& e) {
    err << "lexicon error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DuplicateConcept& e) {
    err << "lexicon error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidEncoderSpec& e) {
    err << "encoder error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PerplexityTooLarge& e) {
    err << "projection error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const EmptyCorpus& e) {
    err << "empty corpus: " << e.what() << '\n';
    return kExitEmptyCorpus;
  } catch (const InsufficientCorpus& e) {
    err << "empty corpus: " << e.what() << '\n';
    return kExitEmptyCorpus;
  } catch (const NonFiniteLoss& e) {
    err << "non-finite loss: " << e.what() << " (bias=" << e.bias
        << ", representation=" << e.representation << ", grad_norm=" << e.grad_norm << ")\n";
    return kExitNonFinite;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return parse_code;
  } catch (const InsufficientOccurrences& e) {
    err << "insufficient occurrences: " << e.what() << '\n';
    return kExitInsufficient;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// KeyValueConfig

KeyValueConfig KeyValueConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  KeyValueConfig kv;
  kv.parse_into(ss.str(), fs::absolute(path).parent_path(), 0);
  return kv;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const fs::path& base_dir) {
  KeyValueConfig kv;
  kv.parse_into(text, base_dir, 0);
  return kv;
}

void KeyValueConfig::parse_into(std::string_view text, const fs::path& base_dir, int depth) {
  if (depth > 16) throw InvalidConfig("include nesting too deep");
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include", 0) == 0 && line.size() > 7 && (line[7] == ' ' || line[7] == '\t')) {
      fs::path inc = trim(line.substr(8));
      if (inc.is_relative()) inc = base_dir / inc;
      std::ifstream f(inc);
      if (!f) throw InvalidConfig("line " + std::to_string(lineno) + ": cannot include " + inc.string());
      std::ostringstream ss;
      ss << f.rdbuf();
      parse_into(ss.str(), inc.parent_path(), depth + 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
  }
}

void KeyValueConfig::set(const std::string& key, const std::string& value,
                         const fs::path& base_dir) {
  values_[key] = Entry{value, base_dir};
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidConfig("missing key " + key);
  return it->second.value;
}

fs::path KeyValueConfig::path(const std::string& key) const {
  const auto& e = values_.at(key);
  fs::path p = e.value;
  if (!p.empty() && p.is_relative() && !e.base_dir.empty()) p = e.base_dir / p;
  return p.lexically_normal();
}

std::vector<fs::path> KeyValueConfig::paths(const std::string& key) const {
  const auto& e = values_.at(key);
  std::vector<fs::path> out;
  for (const auto& item : split_list(e.value)) {
    fs::path p = item;
    if (p.is_relative() && !e.base_dir.empty()) p = e.base_dir / p;
    out.push_back(p.lexically_normal());
  }
  return out;
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { c.seed = to_size(k, v); }},
      {"out_dir", [&](auto& k, auto&) { c.out_dir = kv.path(k); }},
      {"domain.name", [&](auto&, auto& v) { c.domain_name = v; }},
      {"lexicon.neutral", [&](auto& k, auto&) { c.neutral_words = kv.path(k); }},
      {"lexicon.attributes", [&](auto& k, auto&) { c.attribute_words = kv.paths(k); }},
      {"corpus.files", [&](auto& k, auto&) { c.corpus_files = kv.paths(k); }},
      {"corpus.max_tokens",
       [&](auto& k, auto& v) { c.collect.max_tokens_per_sentence = to_size(k, v); }},
      {"corpus.exclusive_attribute_sentences",
       [&](auto& k, auto& v) { c.collect.exclusive_attribute_sentences = to_bool(k, v); }},
      {"prepare.reliability_threshold",
       [&](auto& k, auto& v) { c.reliability_threshold = to_size(k, v); }},
      {"prepare.equalize", [&](auto& k, auto& v) { c.equalize = to_bool(k, v); }},
      {"prepare.cap", [&](auto& k, auto& v) { c.cap = to_cap(k, v); }},
      {"encoder.layers", [&](auto& k, auto& v) { c.encoder.num_layers = to_size(k, v); }},
      {"encoder.hidden", [&](auto& k, auto& v) { c.encoder.hidden_size = to_size(k, v); }},
      {"encoder.heads", [&](auto& k, auto& v) { c.encoder.num_heads = to_size(k, v); }},
      {"encoder.intermediate",
       [&](auto& k, auto& v) { c.encoder.intermediate_size = to_size(k, v); }},
      {"encoder.max_positions",
       [&](auto& k, auto& v) { c.encoder.max_positions = to_size(k, v); }},
      {"encoder.vocab_words", [&](auto& k, auto& v) { c.vocab_words = to_size(k, v); }},
      {"tune.lambda", [&](auto& k, auto& v) { c.tune.lambda = to_double(k, v); }},
      {"tune.rho", [&](auto& k, auto& v) { c.tune.rho = to_double(k, v); }},
      {"tune.learning_rate", [&](auto& k, auto& v) { c.tune.learning_rate = to_double(k, v); }},
      {"tune.batch_size", [&](auto& k, auto& v) { c.tune.batch_size = to_size(k, v); }},
      {"tune.prefix_length", [&](auto& k, auto& v) { c.tune.prefix_length = to_size(k, v); }},
      {"tune.epochs", [&](auto& k, auto& v) { c.tune.max_epochs = to_size(k, v); }},
      {"tune.checkpoint_every",
       [&](auto& k, auto& v) { c.tune.checkpoint_every_steps = to_size(k, v); }},
      {"tune.layer",
       [&](auto& k, auto& v) {
         if (v == "final") c.tune.layer = LayerSelector::kFinal;
         else if (v == "all-mean") c.tune.layer = LayerSelector::kAllMean;
         else throw InvalidConfig(k + ": expected final or all-mean");
       }},
      {"tune.representation",
       [&](auto& k, auto& v) {
         if (v == "batch-neighbors") c.tune.representation = RepresentationMode::kBatchNeighbors;
         else if (v == "hidden-softmax") c.tune.representation = RepresentationMode::kHiddenSoftmax;
         else throw InvalidConfig(k + ": expected batch-neighbors or hidden-softmax");
       }},
      {"tune.beta1", [&](auto& k, auto& v) { c.tune.beta1 = to_double(k, v); }},
      {"tune.beta2", [&](auto& k, auto& v) { c.tune.beta2 = to_double(k, v); }},
      {"tune.epsilon", [&](auto& k, auto& v) { c.tune.epsilon = to_double(k, v); }},
      {"tune.clip_norm", [&](auto& k, auto& v) { c.tune.clip_norm = to_double(k, v); }},
      {"tune.heldout_fraction",
       [&](auto& k, auto& v) { c.tune.heldout_fraction = to_double(k, v); }},
      {"tune.max_steps", [&](auto& k, auto& v) { c.tune.max_steps = to_size(k, v); }},
      {"eval.seat", [&](auto& k, auto&) { c.seat_files = kv.paths(k); }},
      {"eval.crows", [&](auto& k, auto&) { c.crows_file = kv.path(k); }},
      {"eval.stereoset", [&](auto& k, auto&) { c.stereoset_file = kv.path(k); }},
      {"eval.stereoset_filter", [&](auto& k, auto& v) { c.stereoset_filter = to_bool(k, v); }},
      {"eval.stereoset_targets", [&](auto&, auto& v) { c.stereoset_targets = split_list(v); }},
      {"eval.pooling",
       [&](auto& k, auto& v) {
         if (v == "mean") c.pooling = Pooling::kMean;
         else if (v == "first") c.pooling = Pooling::kFirstToken;
         else throw InvalidConfig(k + ": expected mean or first");
       }},
      {"eval.early_step", [&](auto& k, auto& v) { c.early_step = to_size(k, v); }},
      {"eval.seat_samples", [&](auto& k, auto& v) { c.seat_samples = to_size(k, v); }},
      {"project.perplexity", [&](auto& k, auto& v) { c.perplexity = to_double(k, v); }},
      {"project.min_sentences", [&](auto& k, auto& v) { c.min_sentences = to_size(k, v); }},
      {"project.strict", [&](auto& k, auto& v) { c.strict_occurrences = to_bool(k, v); }},
  };
  for (const auto& key : kv.keys()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidConfig("unknown key " + key);
    it->second(key, kv.raw(key));
  }
  c.tune.seed = c.derived_seed("tune");
  c.encoder.validate();
  return c;
}

void RunConfig::validate_paths() const {
  auto need = [](const fs::path& p, const std::string& what) {
    if (p.empty()) throw InvalidConfig(what + " is not set");
    if (!fs::exists(p)) throw InvalidConfig(what + " does not exist: " + p.string());
  };
  need(neutral_words, "lexicon.neutral");
  if (attribute_words.size() < 2) throw InvalidConfig("lexicon.attributes needs at least two files");
  for (const auto& p : attribute_words) need(p, "lexicon.attributes");
  for (const auto& p : corpus_files) need(p, "corpus.files");
  for (const auto& p : seat_files) need(p, "eval.seat");
  if (!crows_file.empty()) need(crows_file, "eval.crows");
  if (!stereoset_file.empty()) need(stereoset_file, "eval.stereoset");
}

std::uint64_t RunConfig::derived_seed(std::string_view label) const {
  return derive_seed(seed, label);
}

// ---------------------------------------------------------------------------
// commands

int cmd_prepare(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, kExitConfig, [&] {
    c.validate_paths();
    if (c.corpus_files.empty()) throw InvalidConfig("corpus.files is not set");
    const BiasDomain domain = load_domain(c);
    const std::uint64_t seed = c.derived_seed("corpus");
    fs::create_directories(c.out_dir);
    const fs::path stats_path = c.out_dir / "stats.csv";
    std::ofstream stats(stats_path);
    CorpusSlices slices = collect(read_corpus_lines(c), domain, c.collect);
    write_stats_csv(stats, "raw", corpus_stats(slices), true);
    if (c.reliability_threshold > 0) {
      slices = reliability_filter(std::move(slices), c.reliability_threshold);
      write_stats_csv(stats, "reliability", corpus_stats(slices), false);
    }
    if (c.equalize) {
      slices = quality_equalize(std::move(slices), seed);
      write_stats_csv(stats, "quality", corpus_stats(slices), false);
    }
    if (c.cap > 0) {
      slices = quantity_cap(std::move(slices), c.cap, seed);
      write_stats_csv(stats, "quantity-" + std::to_string(c.cap), corpus_stats(slices), false);
    }
    fs::remove_all(c.slices_dir());
    write_slices(slices, c.slices_dir());
    const WordPieceTokenizer tok = build_tokenizer(c, domain, slices);
    tok.save(vocab_path(c));
    err << "prepared " << slices.neutral.size() << " neutral sentences";
    for (const auto& a : slices.attributes) err << ", " << a.total() << " " << a.name;
    err << " over " << slices.concepts() << " concepts\n";
    out << stats_path.string() << '\n'
        << (c.slices_dir() / "manifest.tsv").string() << '\n'
        << vocab_path(c).string() << '\n';
  });
}

int cmd_tune(const RunConfig& c, const std::optional<fs::path>& resume, std::ostream& out,
             std::ostream& err) {
  return guarded(err, kExitConfig, [&] {
    c.validate_paths();
    const BiasDomain domain = load_domain(c);
    c.tune.validate(domain.d());
    const CorpusSlices slices = load_slices(c, domain);
    const WordPieceTokenizer tok = load_tokenizer(c);
    const TinyEncoder encoder = make_encoder(c, tok);
    TuneIo io;
    io.checkpoint_dir = c.checkpoints_dir();
    if (resume) {
      fs::path state = *resume;
      if (state.extension() != ".state") state.replace_extension(".state");
      if (!fs::exists(state)) throw InvalidConfig("no resume state at " + state.string());
      io.resume_state = state;
    }
    const fs::path metrics_path = c.out_dir / "metrics.tsv";
    fs::create_directories(c.out_dir);
    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    io.metrics = &metrics;
    const CheckpointTrail trail = tune(slices, encoder, tok, c.tune, io);
    err << "tuned to step " << (trail.entries.empty() ? 0 : trail.entries.back().step) << " with "
        << trail.entries.size() << " checkpoints\n";
    out << (c.checkpoints_dir() / "trail.tsv").string() << '\n' << metrics_path.string() << '\n';
  });
}

int cmd_eval(const RunConfig& c, const EvalTarget& target, std::ostream& out, std::ostream& err) {
  return guarded(err, kExitDataset, [&] {
    c.validate_paths();
    const WordPieceTokenizer tok = load_tokenizer(c);
    const TinyEncoder encoder = make_encoder(c, tok);

    std::string label = "original";
    std::optional<PromptParameters> seat_prompt;
    std::optional<PromptParameters> mlm_prompt;
    if (target.checkpoint) {
      label = "prompted";
      seat_prompt = checked_prompt(*target.checkpoint, encoder.spec());
      mlm_prompt = seat_prompt;
    } else if (target.tuned) {
      label = "tuned";
      const CheckpointTrail trail = read_trail(c.checkpoints_dir() / "trail.tsv");
      const TrailEntry& early = select_checkpoint(trail, CheckpointPolicy::kEarly, c.early_step);
      const TrailEntry& final = select_checkpoint(trail, CheckpointPolicy::kFinal);
      err << "CrowS/StereoSet use step " << early.step << ", SEAT uses step " << final.step << '\n';
      mlm_prompt = checked_prompt(early.path, encoder.spec());
      seat_prompt = checked_prompt(final.path, encoder.spec());
    }
    const PromptParameters* seat_p = seat_prompt ? &*seat_prompt : nullptr;
    const PromptParameters* mlm_p = mlm_prompt ? &*mlm_prompt : nullptr;

    EvalReport report;
    report.label = label;
    SeatOptions seat_opt;
    seat_opt.seed = c.derived_seed("eval");
    seat_opt.samples = c.seat_samples;
    const SentenceEmbedder embed = [&](const std::string& s) {
      return sentence_embedding(encoder, tok, seat_p, s, c.pooling);
    };
    for (const auto& f : c.seat_files) {
      const SeatTest test = load_seat(f);
      report.seat[test.id] = seat_score(test, embed, seat_opt);
    }
    if (!c.crows_file.empty()) {
      std::vector<AlignedCrowsPair> pairs;
      for (const auto& p : load_crows(c.crows_file)) pairs.push_back(align_crows_pair(tok, p));
      report.crows = crows_score(pairs, EncoderPllScorer(encoder, mlm_p));
    }
    if (!c.stereoset_file.empty()) {
      std::vector<StereoExample> examples = load_stereoset(c.stereoset_file);
      if (c.stereoset_filter) {
        examples = filter_stereoset(examples, c.stereoset_targets.empty()
                                                  ? default_stereoset_targets()
                                                  : c.stereoset_targets);
      }
      report.stereoset = stereoset_score(examples, EncoderFillScorer(encoder, tok, mlm_p));
    }

    fs::create_directories(c.reports_dir());
    const fs::path kv_path = c.reports_dir() / (label + ".kv");
    const fs::path csv_path = c.reports_dir() / (label + ".csv");
    {
      std::ofstream kv(kv_path);
      write_report_kv(kv, report);
      std::ofstream csv(csv_path);
      write_report_csv(csv, report);
    }
    out << kv_path.string() << '\n' << csv_path.string() << '\n';
  });
}

int cmd_project(const RunConfig& c, const std::vector<std::string>& words,
                const std::optional<fs::path>& checkpoint, std::ostream& out, std::ostream& err) {
  return guarded(err, kExitConfig, [&] {
    c.validate_paths();
    if (words.empty()) throw InvalidConfig("no words to project");
    const BiasDomain domain = load_domain(c);
    const LexiconIndex index(domain);
    const CorpusSlices slices = load_slices(c, domain);
    const WordPieceTokenizer tok = load_tokenizer(c);
    const TinyEncoder encoder = make_encoder(c, tok);
    std::optional<PromptParameters> prompt;
    if (checkpoint) prompt = checked_prompt(*checkpoint, encoder.spec());

    struct Pick {
      std::string word;
      std::string group;
      std::vector<std::pair<const SentenceRecord*, const Match*>> hits;
    };
    std::vector<Pick> picks;
    std::vector<std::string> deficient;
    for (const auto& raw : words) {
      const std::string w = to_lower_ascii(raw);
      const auto ref = index.find(w);
      if (!ref) throw InvalidConfig("word not in the lexicon: " + raw);
      Pick pick{w, ref->role == WordRole::kNeutral ? "neutral" : domain.attributes[ref->attribute].name, {}};
      auto scan = [&](const std::vector<SentenceRecord>& records) {
        for (const auto& r : records) {
          for (const auto& m : r.matches) {
            if (m.word == w) {
              pick.hits.emplace_back(&r, &m);
              break;
            }
          }
        }
      };
      if (ref->role == WordRole::kNeutral) {
        scan(slices.neutral);
      } else {
        for (const auto& b : slices.attributes[ref->attribute].buckets) {
          if (b.word == w) scan(b.sentences);
        }
      }
      if (pick.hits.size() < c.min_sentences) {
        deficient.push_back(w + " (" + std::to_string(pick.hits.size()) + ")");
        if (!c.strict_occurrences && !pick.hits.empty()) picks.push_back(std::move(pick));
      } else {
        picks.push_back(std::move(pick));
      }
    }
    if (!deficient.empty()) {
      std::string list;
      for (const auto& d : deficient) list += (list.empty() ? "" : ", ") + d;
      if (c.strict_occurrences) {
        throw InsufficientOccurrences("need " + std::to_string(c.min_sentences) +
                                      " sentences per word: " + list);
      }
      err << "warning: fewer than " << c.min_sentences << " sentences for " << list << '\n';
    }

    const std::uint64_t seed = c.derived_seed("project");
    RowMatrix protos(static_cast<Eigen::Index>(picks.size()),
                     static_cast<Eigen::Index>(encoder.spec().hidden_size));
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const auto& hits = picks[i].hits;
      Rng rng(derive_seed(seed, picks[i].word));
      const auto chosen = rng.sample_sorted(hits.size(), std::min(hits.size(), c.min_sentences));
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(protos.cols());
      for (const std::size_t j : chosen) {
        const auto& [record, match] = hits[j];
        const auto t = tok.tokenize(record->text, {{match->begin, match->end}});
        const LayerStates states = encoder.encode(t, prompt ? &*prompt : nullptr);
        sum += word_embedding(states, t.word_spans.front(), LayerSelector::kFinal);
      }
      protos.row(static_cast<Eigen::Index>(i)) = (sum / static_cast<double>(chosen.size())).transpose();
    }
    const RowMatrix xy = project_2d(protos, c.perplexity, seed);
    std::vector<PlotRow> rows;
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      rows.push_back(PlotRow{xy(r, 0), xy(r, 1), picks[i].word, picks[i].group});
    }
    fs::create_directories(c.out_dir);
    const fs::path path = c.out_dir / (checkpoint ? "projection_prompted.tsv" : "projection_original.tsv");
    std::ofstream f(path);
    write_plot_rows(f, rows);
    out << path.string() << '\n';
  });
}

int cmd_report(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, kExitConfig, [&] {
    std::vector<fs::path> files;
    if (fs::exists(c.reports_dir())) {
      for (const auto& e : fs::directory_iterator(c.reports_dir())) {
        if (e.path().extension() == ".kv") files.push_back(e.path());
      }
    }
    if (files.empty()) throw InvalidConfig("no reports in " + c.reports_dir().string() + "; run eval first");
    std::sort(files.begin(), files.end());
    const fs::path path = c.reports_dir() / "summary.csv";
    std::ofstream csv(path);
    csv << "label,benchmark,subset,metric,value\n";
    for (const auto& f : files) {
      std::ifstream in(f);
      const EvalReport report = read_report_kv(in);
      std::ostringstream body;
      write_report_csv(body, report);
      std::istringstream lines(body.str());
      std::string line;
      std::getline(lines, line);  // header
      while (std::getline(lines, line)) csv << report.label << ',' << line << '\n';
      err << "summarized " << f.filename().string() << '\n';
    }
    out << path.string() << '\n';
  });
}

}  // namespace debias

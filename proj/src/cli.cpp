#include "latgen/cli.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "latgen/error.hpp"
#include "latgen/latentspace.hpp"

namespace latgen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_sentence(JointVariant v) { return v == JointVariant::LatentSentence; }

json transformer_json(const nn::TransformerConfig& c) {
  json j;
  to_json(j, c);
  return j;
}

json train_json(const std::string& schedule, double lr, double clip) {
  return {{"epochs", 10},      {"batch_size", 8},    {"schedule", schedule},  {"lr", lr},
          {"decay", 0.5},      {"warmup", 8000},     {"d_model", nullptr},    {"clip_norm", clip},
          {"stop_at_accuracy", 0.0}};
}

// Walks `user` against `defaults` and rejects keys the defaults don't know.
void check_known_keys(const json& user, const json& defaults, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& d = defaults.at(it.key());
    if (d.is_object() && !it.value().is_null()) check_known_keys(it.value(), d, key);
  }
}

std::string dotted(const std::string& pointer) {
  std::string s = pointer.substr(1);
  for (char& c : s)
    if (c == '/') c = '.';
  return s;
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& pointer) const {
    const json::json_pointer p(pointer);
    if (!root_.contains(p) || root_.at(p).is_null()) throw ConfigError("config field '" + dotted(pointer) + "' is required");
    return root_.at(p);
  }
  bool present(const std::string& pointer) const {
    const json::json_pointer p(pointer);
    return root_.contains(p) && !root_.at(p).is_null();
  }
  std::size_t size(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) throw ConfigError("config field '" + dotted(pointer) + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }
  double number(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_number()) throw ConfigError("config field '" + dotted(pointer) + "' must be a number");
    return v.get<double>();
  }
  std::string string(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_string()) throw ConfigError("config field '" + dotted(pointer) + "' must be a string");
    return v.get<std::string>();
  }
  bool boolean(const std::string& pointer) const {
    const json& v = at(pointer);
    if (!v.is_boolean()) throw ConfigError("config field '" + dotted(pointer) + "' must be true or false");
    return v.get<bool>();
  }
  nn::TransformerConfig transformer(const std::string& pointer) const {
    nn::TransformerConfig c{size(pointer + "/dim"), size(pointer + "/heads"), size(pointer + "/layers"),
                            size(pointer + "/ff")};
    if (c.dim == 0 || c.heads == 0 || c.layers == 0 || c.ff == 0 || c.dim % c.heads != 0)
      throw ConfigError("config section '" + dotted(pointer) + "' needs positive sizes with dim divisible by heads");
    return c;
  }
  // d_model defaults to the model width when left null.
  TrainSection train(const std::string& pointer, std::size_t model_dim) const {
    TrainSection t;
    t.epochs = size(pointer + "/epochs");
    t.batch_size = size(pointer + "/batch_size");
    if (t.batch_size == 0) throw ConfigError("config field '" + dotted(pointer) + ".batch_size' must be positive");
    t.schedule.kind = nn::parse_schedule(string(pointer + "/schedule"));
    t.schedule.base = number(pointer + "/lr");
    t.schedule.decay = number(pointer + "/decay");
    t.schedule.warmup = size(pointer + "/warmup");
    t.schedule.d_model = present(pointer + "/d_model") ? size(pointer + "/d_model") : model_dim;
    t.clip_norm = number(pointer + "/clip_norm");
    t.stop_at_accuracy = number(pointer + "/stop_at_accuracy");
    if (t.schedule.base < 0) throw ConfigError("config field '" + dotted(pointer) + ".lr' must be non-negative");
    if (t.schedule.kind == nn::ScheduleKind::Noam && (t.schedule.warmup == 0 || t.schedule.d_model == 0))
      throw ConfigError("noam schedule in '" + dotted(pointer) + "' needs positive warmup and d_model");
    return t;
  }

 private:
  const json& root_;
};

void require_file(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path))
    throw ConfigError("missing " + what + ": " + path.string() + " (run 'latgen " + producer + "' first)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string curve_csv(const std::vector<EpochStats>& curve) {
  std::string s = "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < curve.size(); ++e)
    s += std::to_string(e) + "," + fmt(curve[e].loss) + "," + fmt(curve[e].accuracy) + "\n";
  return s;
}

PretrainOptions pretrain_options(const TrainSection& t, std::uint64_t seed, std::ostream& out, const std::string& tag) {
  PretrainOptions o;
  o.epochs = t.epochs;
  o.batch_size = t.batch_size;
  o.schedule = t.schedule;
  o.clip_norm = t.clip_norm;
  o.seed = seed;
  o.stop_at_accuracy = t.stop_at_accuracy;
  o.on_epoch = [&out, tag](std::size_t epoch, double loss, double acc) {
    out << tag << " epoch " << epoch << " loss " << fmt(loss) << " accuracy " << fmt(acc) << "\n";
  };
  return o;
}

Corpus load_prepared_corpus(const RunConfig& cfg, const WorkPaths& paths, const fs::path& file) {
  require_file(file, "corpus", "prepare");
  require_file(paths.vocab, "vocabulary", "prepare");
  require_file(paths.tags, "tag set", "prepare");
  const Vocabulary vocab = Vocabulary::load(paths.vocab);
  const PosTagSet tags = PosTagSet::load(paths.tags);
  CorpusOptions o;
  o.scheme = cfg.scheme;
  o.vocabulary = &vocab;
  o.tagset = &tags;
  return load_corpus(file, o);
}

// Candidate sets and labels for the configured variant.
struct Prepared {
  std::optional<BagOfWordsEncoder> encoder;
  SentenceCandidateSet sentences;
  PosCandidateSet pos;
  std::vector<LabeledExample> labels;
};

Prepared load_prepared(const RunConfig& cfg, const WorkPaths& paths, const Corpus& corpus, bool with_labels) {
  Prepared p;
  if (is_sentence(cfg.variant)) {
    require_file(paths.sentence_candidates, "sentence candidates", "prepare");
    p.encoder.emplace(corpus.vocabulary);
    p.sentences = load_sentence_candidates(paths.sentence_candidates, *p.encoder);
    if (with_labels) {
      require_file(paths.sentence_labels, "sentence labels", "prepare");
      p.labels = load_labels(paths.sentence_labels);
    }
  } else {
    require_file(paths.pos_candidates, "POS candidates", "prepare");
    p.pos = load_pos_candidates(paths.pos_candidates);
    if (with_labels) {
      require_file(paths.pos_labels, "POS labels", "prepare");
      p.labels = load_labels(paths.pos_labels);
    }
  }
  for (const auto& l : p.labels)
    if (l.pair >= corpus.pairs.size() || l.response >= corpus.pairs[l.pair].responses.size())
      throw LabelError("label refers to pair " + std::to_string(l.pair) + " response " + std::to_string(l.response) +
                       " which the corpus does not have");
  return p;
}

IdSeq post_ids(const Corpus& corpus, std::size_t pair) { return corpus.vocabulary.encode(corpus.pairs[pair].post).ids; }

json checkpoint_state(const RunConfig& cfg, std::size_t epochs) {
  return {{"variant", to_string(cfg.variant)}, {"epochs", epochs}};
}

// Loaded latent-side and generator models for one variant.
struct Models {
  std::unique_ptr<LatentClassifier> classifier;
  std::unique_ptr<LatentPosGenerator> pos_generator;
  std::unique_ptr<DialogueGenerator> generator;
};

Models load_models(const RunConfig& cfg, const fs::path& predictor, const fs::path& generator) {
  Models m;
  if (cfg.variant == JointVariant::GeneratePos)
    m.pos_generator = load_pos_generator(predictor);
  else
    m.classifier = load_classifier(predictor);
  m.generator = load_generator(generator);
  return m;
}

void save_latent_side(const Models& m, const fs::path& path, const json& state) {
  if (m.pos_generator)
    save_pos_generator(*m.pos_generator, path, state);
  else
    save_classifier(*m.classifier, path, state);
}

std::string history_csv(const std::vector<EpochSummary>& history, bool edit_distance) {
  std::string s = edit_distance ? "epoch,mean_edit_distance\n" : "epoch,mean_q\n";
  for (const auto& h : history)
    s += std::to_string(h.epoch) + "," + fmt(edit_distance ? h.mean_edit_distance : h.mean_q) + "\n";
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream f(path, std::ios::binary);
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

json read_json_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace

json default_config(JointVariant variant) {
  const bool sentence = is_sentence(variant);
  const nn::TransformerConfig tf{32, 4, 2, 64};
  json latent = {{"clusters", nullptr},
                 {"sentence_candidates", nullptr},
                 {"pos_candidates", nullptr},
                 {"kmeans_iters", 100},
                 {"workers", 1}};
  if (sentence) {
    latent["clusters"] = 1000;
    latent["sentence_candidates"] = 50000;
  }
  // Recurrent models: Adam with per-epoch decay and clipping. Transformers:
  // noam warmup without clipping, joint fine-tuning at 1e-5.
  const json rnn_pred = train_json("epoch-decay", 0.002, 5.0);
  const json rnn_gen = train_json("epoch-decay", 0.0002, 5.0);
  const json tf_train = train_json("noam", 1.0, 0.0);
  const std::size_t beam = sentence ? 4 : 3;
  return {
      {"seed", nullptr},
      {"variant", to_string(variant)},
      {"paths", {{"corpus", nullptr}, {"work_dir", "run"}}},
      {"corpus", {{"scheme", "word"}, {"vocab_max_size", 50000}, {"vocab_min_freq", 1}}},
      {"latent", latent},
      {"predictor",
       {{"embed_dim", 64},
        {"hidden", 64},
        {"mlp_hidden", 64},
        {"encoder", transformer_json(tf)},
        {"decoder", transformer_json(tf)},
        {"train", sentence ? rnn_pred : tf_train}}},
      {"generator",
       {{"embed_dim", 64},
        {"enc_hidden", 64},
        {"dec_hidden", 64},
        {"attn_dim", 64},
        {"encoder", transformer_json(tf)},
        {"decoder", transformer_json(tf)},
        {"max_input_len", 128},
        {"train", sentence ? rnn_gen : tf_train}}},
      {"joint",
       {{"epochs", 10},
        {"predictor_lr", sentence ? 0.002 : 1e-5},
        {"predictor_decay", 0.5},
        {"generator_lr", sentence ? 0.0002 : 1e-5},
        {"clip_norm", 5.0},
        {"episodes_per_step", 8},
        {"choose", "sample"},
        {"temperature", 1.0},
        {"pos_max_len", 20},
        {"baseline", "none"},
        {"baseline_momentum", 0.9},
        {"reward_tokenization", "word"},
        {"beam_size", beam},
        {"max_len", 20}}},
      {"decode",
       {{"beam_size", beam},
        {"max_len", 20},
        {"length_normalize", true},
        {"choose", "argmax"},
        {"temperature", 1.0},
        {"pos_mode", "beam"}}},
      {"evaluate", {{"smoothing", false}}},
  };
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    pointer += "/" + part;
  }
  if (!config.is_object()) config = json::object();
  config[json::json_pointer(pointer)] = value;
}

RunConfig parse_config(const json& user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  JointVariant variant = JointVariant::LatentSentence;
  if (user.contains("variant")) {
    if (!user["variant"].is_string()) throw ConfigError("config field 'variant' must be a string");
    variant = parse_joint_variant(user["variant"].get<std::string>());
  }
  const json defaults = default_config(variant);
  check_known_keys(user, defaults, "");
  json merged = defaults;
  merged.merge_patch(user);
  const Reader r(merged);

  RunConfig c;
  c.raw = merged;
  c.variant = variant;
  c.seed = r.size("/seed");
  c.corpus = r.string("/paths/corpus");
  c.work_dir = r.string("/paths/work_dir");
  c.scheme = parse_scheme(r.string("/corpus/scheme"));
  c.vocab_max_size = r.size("/corpus/vocab_max_size");
  c.vocab_min_freq = r.size("/corpus/vocab_min_freq");
  if (c.vocab_max_size <= static_cast<std::size_t>(Vocabulary::kNumSpecials))
    throw ConfigError("corpus.vocab_max_size must exceed the " + std::to_string(Vocabulary::kNumSpecials) +
                      " reserved tokens");

  if (is_sentence(variant)) {
    if (r.present("/latent/pos_candidates"))
      throw ConfigError("latent.pos_candidates is only used by the POS variants, not " + to_string(variant));
    c.clusters = r.size("/latent/clusters");
    c.sentence_candidates = r.size("/latent/sentence_candidates");
    if (c.clusters == 0) throw ConfigError("latent.clusters must be positive");
    if (c.sentence_candidates < c.clusters)
      throw ConfigError("latent.sentence_candidates (" + std::to_string(c.sentence_candidates) +
                        ") must be at least latent.clusters (" + std::to_string(c.clusters) + ")");
  } else {
    if (r.present("/latent/clusters") || r.present("/latent/sentence_candidates"))
      throw ConfigError("latent.clusters and latent.sentence_candidates are only used by latent-sentence, not " +
                        to_string(variant));
    c.pos_candidates = r.size("/latent/pos_candidates");
    if (c.pos_candidates == 0) throw ConfigError("latent.pos_candidates must be positive");
  }
  c.kmeans_iters = r.size("/latent/kmeans_iters");
  c.workers = r.size("/latent/workers");
  if (c.workers == 0) throw ConfigError("latent.workers must be positive");

  c.pred_embed_dim = r.size("/predictor/embed_dim");
  c.pred_hidden = r.size("/predictor/hidden");
  c.pred_mlp_hidden = r.size("/predictor/mlp_hidden");
  c.pred_encoder = r.transformer("/predictor/encoder");
  c.pred_decoder = r.transformer("/predictor/decoder");
  if (variant == JointVariant::GeneratePos && c.pred_encoder.dim != c.pred_decoder.dim)
    throw ConfigError("predictor.encoder.dim and predictor.decoder.dim must match");
  c.predictor_train = r.train("/predictor/train", c.pred_encoder.dim);

  c.pointer.embed_dim = r.size("/generator/embed_dim");
  c.pointer.enc_hidden = r.size("/generator/enc_hidden");
  c.pointer.dec_hidden = r.size("/generator/dec_hidden");
  c.pointer.attn_dim = r.size("/generator/attn_dim");
  c.pointer.seed = c.seed + 1;
  c.concat.encoder = r.transformer("/generator/encoder");
  c.concat.decoder = r.transformer("/generator/decoder");
  c.concat.max_input_len = r.size("/generator/max_input_len");
  c.concat.seed = c.seed + 1;
  if (!is_sentence(variant) && c.concat.encoder.dim != c.concat.decoder.dim)
    throw ConfigError("generator.encoder.dim and generator.decoder.dim must match");
  c.generator_train = r.train("/generator/train", c.concat.decoder.dim);

  JointTrainConfig& j = c.joint;
  j.variant = variant;
  j.epochs = r.size("/joint/epochs");
  j.predictor_lr = r.number("/joint/predictor_lr");
  j.predictor_decay = r.number("/joint/predictor_decay");
  j.generator_lr = r.number("/joint/generator_lr");
  j.clip_norm = r.number("/joint/clip_norm");
  j.episodes_per_step = r.size("/joint/episodes_per_step");
  j.choose = parse_choose_mode(r.string("/joint/choose"));
  j.temperature = r.number("/joint/temperature");
  j.pos_max_len = r.size("/joint/pos_max_len");
  j.baseline = parse_baseline(r.string("/joint/baseline"));
  j.baseline_momentum = r.number("/joint/baseline_momentum");
  j.reward.tokenization = parse_reward_tokenization(r.string("/joint/reward_tokenization"));
  j.decode.beam_size = r.size("/joint/beam_size");
  j.decode.max_len = r.size("/joint/max_len");
  j.seed = c.seed + 2;
  if (j.predictor_lr < 0 || j.generator_lr < 0) throw ConfigError("joint learning rates must be non-negative");
  if (j.episodes_per_step == 0) throw ConfigError("joint.episodes_per_step must be positive");
  if (!(j.temperature > 0)) throw ConfigError("joint.temperature must be positive");
  if (j.baseline_momentum < 0 || j.baseline_momentum >= 1) throw ConfigError("joint.baseline_momentum must be in [0, 1)");
  if (j.decode.beam_size == 0 || j.decode.max_len == 0 || j.pos_max_len == 0)
    throw ConfigError("joint beam_size, max_len and pos_max_len must be positive");

  c.decode.beam_size = r.size("/decode/beam_size");
  c.decode.max_len = r.size("/decode/max_len");
  c.decode.length_normalize = r.boolean("/decode/length_normalize");
  c.choose = parse_choose_mode(r.string("/decode/choose"));
  c.temperature = r.number("/decode/temperature");
  c.pos_mode = parse_decode_mode(r.string("/decode/pos_mode"));
  if (c.decode.beam_size == 0 || c.decode.max_len == 0) throw ConfigError("decode beam_size and max_len must be positive");
  if (!(c.temperature > 0)) throw ConfigError("decode.temperature must be positive");

  c.smoothing = r.boolean("/evaluate/smoothing");
  return c;
}

json read_config_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  std::ifstream f(path, std::ios::binary);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return j;
}

WorkPaths::WorkPaths(const fs::path& r)
    : root(r),
      vocab(r / "vocab.txt"),
      tags(r / "tags.txt"),
      sentence_candidates(r / "sentence_candidates.jsonl"),
      sentence_labels(r / "sentence_labels.tsv"),
      pos_candidates(r / "pos_candidates.jsonl"),
      pos_labels(r / "pos_labels.tsv"),
      predictor(r / "predictor.ckpt.json"),
      generator(r / "generator.ckpt.json"),
      predictor_curve(r / "predictor_curve.csv"),
      generator_curve(r / "generator_curve.csv"),
      joint_dir(r / "joint"),
      joint_predictor(r / "joint" / "predictor.ckpt.json"),
      joint_generator(r / "joint" / "generator.ckpt.json"),
      joint_progress(r / "joint" / "progress.json"),
      joint_events(r / "joint" / "events.jsonl"),
      joint_edit_distance(r / "joint" / "edit_distance.csv"),
      joint_reward(r / "joint" / "reward.csv"),
      generations(r / "generations.tsv"),
      report(r / "report.json"),
      curves_dir(r / "curves") {}

void cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  if (!fs::exists(cfg.corpus)) throw ConfigError("corpus not found: " + cfg.corpus.string());
  const WorkPaths paths(cfg.work_dir);
  CorpusOptions o;
  o.scheme = cfg.scheme;
  o.vocab_max_size = cfg.vocab_max_size;
  o.vocab_min_freq = cfg.vocab_min_freq;
  const Corpus corpus = load_corpus(cfg.corpus, o);
  fs::create_directories(paths.root);
  corpus.vocabulary.save(paths.vocab);
  corpus.tagset.save(paths.tags);
  out << "pairs " << corpus.pairs.size() << "\n"
      << "responses " << corpus.num_responses() << "\n"
      << "vocabulary " << corpus.vocabulary.size() << "\n"
      << "tags " << corpus.tagset.size() << "\n";

  std::vector<LabeledExample> labels;
  std::size_t count = 0;
  if (is_sentence(cfg.variant)) {
    const BagOfWordsEncoder encoder(corpus.vocabulary);
    std::vector<TokenSeq> responses;
    for (const auto& p : corpus.pairs) responses.insert(responses.end(), p.responses.begin(), p.responses.end());
    const SentenceCandidateSet cands = build_sentence_candidates(responses, encoder, cfg.clusters,
                                                                 cfg.sentence_candidates, cfg.seed, cfg.kmeans_iters);
    save_sentence_candidates(cands, paths.sentence_candidates);
    labels = label_sentences(corpus, cands, encoder, cfg.workers);
    save_labels(labels, paths.sentence_labels);
    count = cands.size();
  } else {
    const PosCandidateSet cands = build_pos_candidates(corpus, cfg.pos_candidates);
    save_pos_candidates(cands, paths.pos_candidates);
    labels = label_pos(corpus, cands, cfg.workers);
    save_labels(labels, paths.pos_labels);
    count = cands.size();
  }
  std::vector<std::size_t> per_label(count, 0);
  for (const auto& l : labels) ++per_label[l.label];
  out << "candidates " << count << "\n"
      << "labels " << labels.size() << "\n";
  out << "label counts";
  for (std::size_t n : per_label) out << " " << n;
  out << "\n";
}

PretrainTarget parse_pretrain_target(const std::string& s) {
  if (s == "predictor") return PretrainTarget::Predictor;
  if (s == "generator") return PretrainTarget::Generator;
  if (s == "both") return PretrainTarget::Both;
  throw ConfigError("unknown pretrain target '" + s + "' (predictor|generator|both)");
}

void cmd_pretrain(const RunConfig& cfg, PretrainTarget which, std::ostream& out) {
  const WorkPaths paths(cfg.work_dir);
  const Corpus corpus = load_prepared_corpus(cfg, paths, cfg.corpus);
  const Prepared prep = load_prepared(cfg, paths, corpus, true);

  if (which != PretrainTarget::Generator) {
    const PretrainOptions o = pretrain_options(cfg.predictor_train, cfg.seed, out, "predictor");
    std::vector<EpochStats> curve;
    if (cfg.variant == JointVariant::GeneratePos) {
      PosGeneratorConfig pc{corpus.vocabulary.size(), corpus.tagset.size(), cfg.pred_encoder, cfg.pred_decoder, cfg.seed};
      LatentPosGenerator model(pc);
      std::vector<SequenceExample> examples;
      for (std::size_t i = 0; i < corpus.pairs.size(); ++i)
        for (const auto& pos : corpus.pairs[i].response_pos)
          examples.push_back({post_ids(corpus, i), pos_target_ids(corpus.tagset, pos)});
      curve = pretrain_pos_generator(model, examples, o);
      save_pos_generator(model, paths.predictor, checkpoint_state(cfg, curve.size()));
    } else {
      std::unique_ptr<LatentClassifier> model;
      if (is_sentence(cfg.variant))
        model = std::make_unique<LatentSentencePredictor>(SentencePredictorConfig{
            corpus.vocabulary.size(), prep.sentences.size(), cfg.pred_embed_dim, cfg.pred_hidden, cfg.pred_mlp_hidden,
            cfg.seed});
      else
        model = std::make_unique<LatentPosSampler>(
            PosSamplerConfig{corpus.vocabulary.size(), prep.pos.size(), cfg.pred_encoder, cfg.pred_mlp_hidden, cfg.seed});
      std::vector<ClassExample> examples;
      for (const auto& l : prep.labels) examples.push_back({post_ids(corpus, l.pair), l.label});
      curve = pretrain_classifier(*model, examples, o);
      save_classifier(*model, paths.predictor, checkpoint_state(cfg, curve.size()));
    }
    write_text(paths.predictor_curve, curve_csv(curve));
    out << "wrote " << paths.predictor.string() << "\n";
  }

  if (which != PretrainTarget::Predictor) {
    const PretrainOptions o = pretrain_options(cfg.generator_train, cfg.seed + 1, out, "generator");
    std::unique_ptr<DialogueGenerator> model;
    std::vector<GeneratorExample> examples;
    if (is_sentence(cfg.variant)) {
      model = std::make_unique<PointerGeneratorModel>(corpus.vocabulary, cfg.pointer);
      for (const auto& l : prep.labels)
        examples.push_back(
            {corpus.pairs[l.pair].post, prep.sentences.entries[l.label], corpus.pairs[l.pair].responses[l.response]});
    } else {
      model = std::make_unique<ConcatTransformerModel>(corpus.vocabulary, corpus.tagset, cfg.concat);
      for (const auto& p : corpus.pairs)
        for (std::size_t r = 0; r < p.responses.size(); ++r) examples.push_back({p.post, p.response_pos[r], p.responses[r]});
    }
    const auto curve = pretrain_generator(*model, examples, o);
    save_generator(*model, paths.generator, checkpoint_state(cfg, curve.size()));
    write_text(paths.generator_curve, curve_csv(curve));
    out << "wrote " << paths.generator.string() << "\n";
  }
}

std::vector<EpochSummary> cmd_train_joint(const RunConfig& cfg, bool resume, std::ostream& out) {
  const WorkPaths paths(cfg.work_dir);
  const Corpus corpus = load_prepared_corpus(cfg, paths, cfg.corpus);
  const Prepared prep = load_prepared(cfg, paths, corpus, false);
  require_file(paths.predictor, "pretrained predictor checkpoint", "pretrain");
  require_file(paths.generator, "pretrained generator checkpoint", "pretrain");

  const bool resuming = resume && fs::exists(paths.joint_progress);
  const Models m = resuming ? load_models(cfg, paths.joint_predictor, paths.joint_generator)
                            : load_models(cfg, paths.predictor, paths.generator);
  std::optional<JointProgress> progress;
  std::vector<std::string> events;
  if (resuming) {
    progress = read_json_file(paths.joint_progress).get<JointProgress>();
    events = read_lines(paths.joint_events);
    if (events.size() < progress->step)
      throw ConfigError("event log " + paths.joint_events.string() + " is shorter than the saved progress");
    events.resize(progress->step);
  }

  fs::create_directories(paths.joint_dir);
  std::ofstream log(paths.joint_events, std::ios::binary | std::ios::trunc);
  if (!log) throw ConfigError("cannot write " + paths.joint_events.string());
  for (const auto& e : events) log << e << "\n";
  log.flush();

  JointModels jm;
  jm.classifier = m.classifier.get();
  jm.pos_generator = m.pos_generator.get();
  jm.generator = m.generator.get();
  jm.sentences = is_sentence(cfg.variant) ? &prep.sentences : nullptr;
  jm.pos = cfg.variant == JointVariant::SamplePos ? &prep.pos : nullptr;

  bool saved = false;
  JointHooks hooks;
  hooks.on_event = [&log](const TrainingEvent& e) {
    log << json(e).dump() << "\n";
    log.flush();
  };
  hooks.on_epoch = [&](const EpochSummary& s, const JointProgress& p) {
    const json state = checkpoint_state(cfg, p.epoch);
    save_latent_side(m, paths.joint_predictor, state);
    save_generator(*m.generator, paths.joint_generator, state);
    write_text(paths.joint_progress, json(p).dump() + "\n");
    write_text(paths.joint_edit_distance, history_csv(p.history, true));
    write_text(paths.joint_reward, history_csv(p.history, false));
    out << "joint epoch " << s.epoch << " meanQ " << fmt(s.mean_q) << " editDistance " << fmt(s.mean_edit_distance)
        << "\n";
    saved = true;
  };
  auto summaries = joint_train(jm, corpus, cfg.joint, hooks, progress);
  if (!saved && !resuming) {
    const json state = checkpoint_state(cfg, 0);
    save_latent_side(m, paths.joint_predictor, state);
    save_generator(*m.generator, paths.joint_generator, state);
    write_text(paths.joint_edit_distance, history_csv({}, true));
    write_text(paths.joint_reward, history_csv({}, false));
  }
  return summaries;
}

CheckpointSource parse_checkpoint_source(const std::string& s) {
  if (s == "auto") return CheckpointSource::Auto;
  if (s == "pretrained") return CheckpointSource::Pretrained;
  if (s == "joint") return CheckpointSource::Joint;
  throw ConfigError("unknown checkpoint source '" + s + "' (auto|pretrained|joint)");
}

std::vector<GenerationRecord> cmd_generate(const RunConfig& cfg, const GenerateArgs& args, std::ostream& out) {
  const WorkPaths paths(cfg.work_dir);
  const Corpus corpus = load_prepared_corpus(cfg, paths, args.input.value_or(cfg.corpus));
  const Prepared prep = load_prepared(cfg, paths, corpus, false);
  bool joint = args.checkpoints == CheckpointSource::Joint;
  if (args.checkpoints == CheckpointSource::Auto)
    joint = fs::exists(paths.joint_predictor) && fs::exists(paths.joint_generator);
  const fs::path pred = joint ? paths.joint_predictor : paths.predictor;
  const fs::path gen = joint ? paths.joint_generator : paths.generator;
  require_file(pred, "predictor checkpoint", joint ? "train-joint" : "pretrain");
  require_file(gen, "generator checkpoint", joint ? "train-joint" : "pretrain");
  const Models m = load_models(cfg, pred, gen);
  if (m.classifier) {
    const std::size_t k = is_sentence(cfg.variant) ? prep.sentences.size() : prep.pos.size();
    if (m.classifier->num_classes() != k)
      throw ConfigError("predictor checkpoint has " + std::to_string(m.classifier->num_classes()) +
                        " classes but the prepared candidate set has " + std::to_string(k));
  }

  nn::Rng rng(cfg.seed);
  const DecisionKind kind = decision_kind(cfg.variant);
  std::vector<GenerationRecord> records;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const IdSeq ids = post_ids(corpus, i);
    TokenSeq latent;
    if (m.pos_generator) {
      PosGenerateOptions o{cfg.pos_mode, cfg.decode.beam_size, cfg.joint.pos_max_len, cfg.temperature};
      latent = m.pos_generator->generate(ids, corpus.tagset, o, &rng).sequence;
    } else {
      const LatentDecision d = choose_latent(m.classifier->distribution(ids), cfg.choose, cfg.temperature, rng);
      latent = is_sentence(cfg.variant) ? prep.sentences.entries[d.index] : prep.pos.entries[d.index];
    }
    Generation g = m.generator->decode(corpus.pairs[i].post, latent, cfg.decode);
    records.push_back({i, kind, std::move(latent), std::move(g.tokens)});
  }
  const fs::path output = args.output.value_or(paths.generations);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  save_generations(records, output);
  out << "wrote " << records.size() << " generations to " << output.string() << " ("
      << (joint ? "joint" : "pretrained") << " checkpoints)\n";
  return records;
}

EvalReport cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out) {
  const WorkPaths paths(cfg.work_dir);
  const fs::path input = args.input.value_or(cfg.corpus);
  if (!fs::exists(input)) throw ConfigError("corpus not found: " + input.string());
  CorpusOptions co;
  co.scheme = cfg.scheme;
  const Corpus corpus = load_corpus(input, co);
  EvalOptions eo;
  eo.smoothing = cfg.smoothing;

  auto score = [&](const fs::path& dump) {
    require_file(dump, "generation dump", "generate");
    return evaluate(corpus, load_generations(dump), eo);
  };

  if (!args.sweep.empty()) {
    json rows = json::array();
    std::string csv = "K_p,n,bleu1,bleu2,bleu3,bleu4,edit_distance\n";
    EvalReport last;
    for (const auto& [k, dump] : args.sweep) {
      last = score(dump);
      rows.push_back({{"K_p", k}, {"dump", dump.string()}, {"report", last.to_json()}});
      csv += std::to_string(k) + "," + std::to_string(last.n);
      for (double b : last.bleu) csv += "," + fmt(b);
      csv += "," + (last.edit_distance ? fmt(*last.edit_distance) : std::string()) + "\n";
    }
    const fs::path base = args.output.value_or(paths.root / "kp_sweep.json");
    write_text(base, rows.dump(2) + "\n");
    fs::path csv_path = base;
    csv_path.replace_extension(".csv");
    write_text(csv_path, csv);
    out << csv;
    return last;
  }

  const EvalReport report = score(args.dump.value_or(paths.generations));
  const fs::path output = args.output.value_or(paths.report);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  save_report(report, output);
  out << report.to_json().dump(2) << "\n";

  if (fs::exists(paths.joint_progress)) {
    const auto progress = read_json_file(paths.joint_progress).get<JointProgress>();
    write_text(paths.curves_dir / "edit_distance.csv", history_csv(progress.history, true));
    write_text(paths.curves_dir / "mean_q.csv", history_csv(progress.history, false));
  }
  if (fs::exists(paths.joint_events)) {
    std::string csv = "step,epoch,meanQ,genLoss,predLr,meanEditDistance\n";
    for (const auto& line : read_lines(paths.joint_events)) {
      const auto e = json::parse(line).get<TrainingEvent>();
      csv += std::to_string(e.step) + "," + std::to_string(e.epoch) + "," + fmt(e.mean_q) + "," + fmt(e.gen_loss) +
             "," + fmt(e.pred_lr) + "," + fmt(e.mean_edit_distance) + "\n";
    }
    write_text(paths.curves_dir / "events.csv", csv);
  }
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dialogue response generation guided by latent sequences", "latgen"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "JSON run config")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--variant", variant, "latent-sentence | sample-pos | generate-pos");
  app.add_option("--set", sets, "override a config field, e.g. joint.epochs=3");

  auto* prepare = app.add_subcommand("prepare", "build candidate sets and pretraining labels");

  std::string which = "both";
  auto* pretrain = app.add_subcommand("pretrain", "pretrain the predictor and/or the generator");
  pretrain->add_option("--which", which, "predictor | generator | both");

  bool resume = false;
  auto* joint = app.add_subcommand("train-joint", "fine-tune both models with REINFORCE");
  joint->add_flag("--resume", resume, "continue from the last saved joint epoch");

  std::optional<std::string> gen_input, gen_output;
  std::string checkpoints = "auto";
  auto* generate = app.add_subcommand("generate", "write a generation dump for a corpus");
  generate->add_option("--input", gen_input, "corpus JSONL (defaults to the config corpus)");
  generate->add_option("--output", gen_output, "dump path (defaults to <work_dir>/generations.tsv)");
  generate->add_option("--checkpoints", checkpoints, "auto | pretrained | joint");

  std::optional<std::string> ev_input, ev_dump, ev_output;
  std::vector<std::string> sweep;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a generation dump");
  evaluate_cmd->add_option("--input", ev_input, "reference corpus (defaults to the config corpus)");
  evaluate_cmd->add_option("--dump", ev_dump, "generation dump (defaults to <work_dir>/generations.tsv)");
  evaluate_cmd->add_option("--output", ev_output, "report path");
  evaluate_cmd->add_option("--sweep", sweep, "K_p=dump pairs, one report row each");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : static_cast<int>(ErrorCategory::Usage);
  }

  try {
    json user = read_config_file(config_path);
    if (seed) user["seed"] = *seed;
    if (variant) user["variant"] = *variant;
    for (const auto& s : sets) apply_override(user, s);
    const RunConfig cfg = parse_config(user);

    if (prepare->parsed()) {
      cmd_prepare(cfg, out);
    } else if (pretrain->parsed()) {
      cmd_pretrain(cfg, parse_pretrain_target(which), out);
    } else if (joint->parsed()) {
      cmd_train_joint(cfg, resume, out);
    } else if (generate->parsed()) {
      GenerateArgs a;
      if (gen_input) a.input = *gen_input;
      if (gen_output) a.output = *gen_output;
      a.checkpoints = parse_checkpoint_source(checkpoints);
      cmd_generate(cfg, a, out);
    } else if (evaluate_cmd->parsed()) {
      EvaluateArgs a;
      if (ev_input) a.input = *ev_input;
      if (ev_dump) a.dump = *ev_dump;
      if (ev_output) a.output = *ev_output;
      for (const auto& s : sweep) {
        const auto eq = s.find('=');
        std::size_t k = 0;
        try {
          if (eq == std::string::npos) throw std::invalid_argument(s);
          std::size_t used = 0;
          k = std::stoul(s.substr(0, eq), &used);
          if (used != eq) throw std::invalid_argument(s);
        } catch (const std::logic_error&) {
          throw ConfigError("--sweep expects K_p=path, got '" + s + "'");
        }
        a.sweep[k] = s.substr(eq + 1);
      }
      cmd_evaluate(cfg, a, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const json::exception& e) {
    err << "error: malformed data: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::Data);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::Data);
  }
}

}  // namespace latgen::cli

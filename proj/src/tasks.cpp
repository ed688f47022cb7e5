#include "sll/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sll {

namespace {

// ---- lexicon ---------------------------------------------------------------

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> v = {
      "the",  "a",     "this",  "that",    "was",   "is",    "felt", "seemed", "looked",
      "really", "very", "truly", "quite",  "so",    "overall", "today", "honestly", "what"};
  return v;
}

const std::vector<std::string>& pos_adjectives() {
  static const std::vector<std::string> v = {"great",     "good",     "lovely",   "superb",
                                             "fine",      "charming", "delightful", "pleasant",
                                             "wonderful", "brilliant", "tasty",    "fresh",
                                             "crisp",     "vivid",    "graceful", "polished"};
  return v;
}

const std::vector<std::string>& neg_adjectives() {
  static const std::vector<std::string> v = {"bad",    "awful",  "boring",   "bland",
                                             "weak",   "poor",   "dull",     "messy",
                                             "tedious", "stale",  "dreadful", "flat",
                                             "murky",  "clumsy", "shallow",  "noisy"};
  return v;
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& topic_nouns() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> v = {
      {"food", {"soup", "bread", "cake", "pasta", "salad", "pie"}},
      {"movie", {"film", "plot", "scene", "acting", "script", "ending"}},
      {"music", {"song", "melody", "rhythm", "chorus", "album", "concert"}},
      {"book", {"novel", "story", "chapter", "poem", "essay", "preface"}},
  };
  return v;
}

const std::vector<std::string>& number_words() {
  static const std::vector<std::string> v = {"zero", "one", "two",   "three", "four",
                                             "five", "six", "seven", "eight", "nine"};
  return v;
}

const std::vector<std::string>& answer_words() {
  static const std::vector<std::string> v = {"positive", "negative", "food", "movie",
                                             "music",    "book",     "yes",  "no"};
  return v;
}

const std::vector<std::string>& question_words() {
  static const std::vector<std::string> v = {"sentiment", "topic", "copy", "reverse",
                                             "text",      "review", "sum",  "plus"};
  return v;
}

// Context patterns; N = noun slot, J = adjective slot.
const std::vector<std::vector<std::string>>& templates() {
  static const std::vector<std::vector<std::string>> v = {
      {"the", "N", "was", "J"},
      {"this", "N", "is", "J"},
      {"that", "N", "seemed", "J"},
      {"a", "truly", "J", "N"},
      {"the", "N", "felt", "really", "J"},
      {"what", "a", "J", "N"},
      {"the", "N", "looked", "J", "today"},
      {"honestly", "the", "N", "was", "quite", "J"},
      {"overall", "the", "N", "was", "J"},
      {"the", "N", "is", "very", "J"},
  };
  return v;
}

std::vector<std::string> build_word_list() {
  std::vector<std::string> words = {"<pad>", "</s>", "[Q]", "[A]"};
  auto push_all = [&](const std::vector<std::string>& src) {
    for (const auto& w : src)
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  };
  push_all(filler_words());
  push_all(pos_adjectives());
  push_all(neg_adjectives());
  for (const auto& [topic, nouns] : topic_nouns()) push_all(nouns);
  push_all(number_words());
  push_all(answer_words());
  push_all(question_words());
  return words;
}

}  // namespace

// ---- Vocab -----------------------------------------------------------------

Vocab Vocab::standard() { return from_words(build_word_list()); }

Vocab Vocab::from_words(std::vector<std::string> words) {
  Vocab v;
  v.words_ = std::move(words);
  for (size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw InputError("unknown word '" + word + "'");
  return it->second;
}

std::string Vocab::word(int id) const {
  if (id >= 0 && id < base_size()) return words_[static_cast<size_t>(id)];
  if (id >= base_size()) return "[G" + std::to_string(id - base_size()) + "]";
  throw IndexError("token id " + std::to_string(id) + " out of range");
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string Vocab::detokenize(std::span<const int> ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

std::string metric_name(MetricKind m) {
  return m == MetricKind::ExactMatch ? "em" : "nf1";
}

MetricKind metric_from_name(const std::string& s) {
  if (s == "em") return MetricKind::ExactMatch;
  if (s == "nf1") return MetricKind::NormalizedF1;
  throw InputError("unknown metric '" + s + "'");
}

// ---- formatting ------------------------------------------------------------

std::vector<int> format_input(const Sample& s) {
  if (s.context.empty()) throw InputError("format_input: empty context");
  std::vector<int> out = s.context;
  if (s.question.has_value()) {
    out.push_back(Vocab::kQ);
    out.insert(out.end(), s.question->begin(), s.question->end());
  }
  return out;
}

std::vector<int> format_target(const Sample& s) {
  if (!s.labeled()) throw ContractError("format_target: sample is unlabeled");
  std::vector<int> out = {Vocab::kA};
  out.insert(out.end(), s.answer->begin(), s.answer->end());
  out.push_back(Vocab::kEos);
  return out;
}

Sample parse_input(std::span<const int> tokens) {
  Sample s;
  auto it = std::find(tokens.begin(), tokens.end(), Vocab::kQ);
  s.context.assign(tokens.begin(), it);
  if (it != tokens.end()) s.question = std::vector<int>(it + 1, tokens.end());
  if (s.context.empty()) throw InputError("parse_input: empty context");
  return s;
}

// ---- augmentation ----------------------------------------------------------

std::vector<int> augment(std::span<const int> context, const AugmentationPolicy& policy,
                         RngStream& rng) {
  if (context.empty()) throw InputError("augment: empty context");
  std::vector<int> out(context.begin(), context.end());
  const int64_t budget =
      static_cast<int64_t>(std::ceil(policy.rho * static_cast<double>(context.size())));
  int64_t used = 0;
  auto eligible = [&](int id) { return id >= 4; };  // specials are never touched

  // Synonym substitution (per position).
  for (size_t i = 0; i < out.size() && used < budget; ++i) {
    if (!eligible(out[i])) continue;
    auto it = policy.synonyms.find(out[i]);
    if (it == policy.synonyms.end() || it->second.empty()) continue;
    if (rng.uniform() < policy.p_synonym) {
      out[i] = it->second[rng.uniform_int(it->second.size())];
      ++used;
    }
  }
  // One random adjacent swap.
  if (out.size() >= 2 && used + 2 <= budget && rng.uniform() < policy.p_swap) {
    const size_t i = rng.uniform_int(out.size() - 1);
    if (eligible(out[i]) && eligible(out[i + 1])) {
      std::swap(out[i], out[i + 1]);
      used += 2;
    }
  }
  // One random deletion (never empties the output).
  if (out.size() >= 2 && used < budget && rng.uniform() < policy.p_delete) {
    const size_t i = rng.uniform_int(out.size());
    if (eligible(out[i])) {
      out.erase(out.begin() + static_cast<int64_t>(i));
      ++used;
    }
  }
  // One random duplication.
  if (used < budget && rng.uniform() < policy.p_duplicate) {
    const size_t i = rng.uniform_int(out.size());
    if (eligible(out[i])) {
      out.insert(out.begin() + static_cast<int64_t>(i), out[i]);
      ++used;
    }
  }
  return out;
}

// ---- synthetic stream ------------------------------------------------------

namespace {

struct Generator {
  const Vocab& vocab;
  std::vector<int> pos_adj_ids, neg_adj_ids;
  std::vector<std::pair<std::string, std::vector<int>>> topics;
  std::vector<int> numbers;

  explicit Generator(const Vocab& v) : vocab(v) {
    for (const auto& w : pos_adjectives()) pos_adj_ids.push_back(v.id(w));
    for (const auto& w : neg_adjectives()) neg_adj_ids.push_back(v.id(w));
    for (const auto& [t, nouns] : topic_nouns()) {
      std::vector<int> ids;
      for (const auto& n : nouns) ids.push_back(v.id(n));
      topics.emplace_back(t, ids);
    }
    for (const auto& w : number_words()) numbers.push_back(v.id(w));
  }

  // A classification context with the requested latent polarity/topic; -1
  // leaves the axis unconstrained.
  std::vector<int> classification_context(RngStream& rng, int polarity, int topic) const {
    const auto& tpl = templates()[rng.uniform_int(templates().size())];
    const int top = topic >= 0 ? topic : static_cast<int>(rng.uniform_int(topics.size()));
    const int noun = topics[static_cast<size_t>(top)].second[rng.uniform_int(
        topics[static_cast<size_t>(top)].second.size())];
    const int pol = polarity >= 0 ? polarity : static_cast<int>(rng.uniform_int(2));
    const auto& adjs = pol == 0 ? pos_adj_ids : neg_adj_ids;
    const int adj = adjs[rng.uniform_int(adjs.size())];
    std::vector<int> out;
    for (const auto& w : tpl) {
      if (w == "N") out.push_back(noun);
      else if (w == "J") out.push_back(adj);
      else out.push_back(vocab.id(w));
    }
    return out;
  }

  std::vector<int> number_sequence(RngStream& rng) const {
    const size_t len = 3 + rng.uniform_int(4);  // 3..6
    std::vector<int> out;
    for (size_t i = 0; i < len; ++i) out.push_back(numbers[rng.uniform_int(numbers.size())]);
    return out;
  }

  std::vector<int> arith_context(RngStream& rng) const {
    // a plus b with a + b <= 9 so the answer stays a single word.
    while (true) {
      const int a = static_cast<int>(rng.uniform_int(10));
      const int b = static_cast<int>(rng.uniform_int(10));
      if (a + b <= 9) return {numbers[a], vocab.id("plus"), numbers[b]};
    }
  }
};

AugmentationPolicy classification_policy(const Vocab& v) {
  AugmentationPolicy p;
  p.p_synonym = 0.25;
  p.p_swap = 0.15;
  p.p_delete = 0.02;
  p.p_duplicate = 0.08;
  p.rho = 0.34;
  // Same-class alternates: two cyclic neighbours per adjective, same-topic
  // neighbours per noun. Keeps the generator's latent label intact.
  auto add_cyclic = [&](const std::vector<std::string>& cls) {
    for (size_t i = 0; i < cls.size(); ++i) {
      const int a = v.id(cls[i]);
      p.synonyms[a] = {v.id(cls[(i + 1) % cls.size()]), v.id(cls[(i + 2) % cls.size()])};
    }
  };
  add_cyclic(pos_adjectives());
  add_cyclic(neg_adjectives());
  for (const auto& [t, nouns] : topic_nouns()) add_cyclic(nouns);
  p.synonyms[v.id("really")] = {v.id("very"), v.id("truly")};
  p.synonyms[v.id("very")] = {v.id("really"), v.id("quite")};
  p.synonyms[v.id("truly")] = {v.id("quite"), v.id("really")};
  p.synonyms[v.id("quite")] = {v.id("very"), v.id("truly")};
  return p;
}

AugmentationPolicy transduction_policy() {
  AugmentationPolicy p;
  p.p_synonym = 0.0;
  p.p_swap = 0.2;
  p.p_delete = 0.05;
  p.p_duplicate = 0.1;
  p.rho = 0.34;
  return p;
}

struct KindInfo {
  std::string question;
  MetricKind metric;
  std::vector<std::string> answers;  // classification label space
};

KindInfo kind_info(const std::string& kind) {
  if (kind == "sentiment") return {"what is the sentiment", MetricKind::ExactMatch, {"positive", "negative"}};
  if (kind == "topic") return {"what is the topic", MetricKind::ExactMatch, {"food", "movie", "music", "book"}};
  if (kind == "polarity") return {"is the review good", MetricKind::ExactMatch, {"yes", "no"}};
  if (kind == "copy") return {"copy the text", MetricKind::NormalizedF1, {}};
  if (kind == "reverse") return {"reverse the text", MetricKind::NormalizedF1, {}};
  if (kind == "arith") return {"what is the sum", MetricKind::ExactMatch, {}};
  throw ParameterError("unknown task kind '" + kind + "'");
}

bool is_classification(const std::string& kind) {
  return kind == "sentiment" || kind == "topic" || kind == "polarity";
}

}  // namespace

std::optional<std::string> generator_latent_answer(const Vocab& vocab, const std::string& kind,
                                                   std::span<const int> context) {
  Generator gen(vocab);
  auto count_in = [&](const std::vector<int>& ids) {
    int n = 0;
    for (int t : context)
      if (std::find(ids.begin(), ids.end(), t) != ids.end()) ++n;
    return n;
  };
  if (kind == "sentiment" || kind == "polarity") {
    const int pos = count_in(gen.pos_adj_ids);
    const int neg = count_in(gen.neg_adj_ids);
    if (pos == neg) return std::nullopt;
    const bool positive = pos > neg;
    if (kind == "sentiment") return positive ? "positive" : "negative";
    return positive ? "yes" : "no";
  }
  if (kind == "topic") {
    std::set<std::string> seen;
    for (const auto& [name, ids] : gen.topics) {
      if (count_in(ids) > 0) seen.insert(name);
    }
    if (seen.size() != 1) return std::nullopt;
    return *seen.begin();
  }
  if (kind == "copy") return vocab.detokenize(context);
  if (kind == "reverse") {
    std::vector<int> rev(context.rbegin(), context.rend());
    return vocab.detokenize(rev);
  }
  if (kind == "arith") {
    if (context.size() != 3 || context[1] != vocab.id("plus")) return std::nullopt;
    auto idx = [&](int id) -> int {
      for (size_t i = 0; i < gen.numbers.size(); ++i)
        if (gen.numbers[i] == id) return static_cast<int>(i);
      return -1;
    };
    const int a = idx(context[0]), b = idx(context[2]);
    if (a < 0 || b < 0 || a + b > 9) return std::nullopt;
    return number_words()[static_cast<size_t>(a + b)];
  }
  throw ParameterError("unknown task kind '" + kind + "'");
}

std::vector<std::string> default_task_kinds(int n_tasks) {
  static const std::vector<std::string> cycle = {"sentiment", "topic",   "polarity",
                                                 "copy",      "reverse", "arith"};
  std::vector<std::string> out;
  for (int i = 0; i < n_tasks; ++i) out.push_back(cycle[static_cast<size_t>(i) % cycle.size()]);
  return out;
}

TaskStream make_synthetic_stream(uint64_t seed, int n_tasks, const StreamSizes& sizes,
                                 const std::vector<std::string>& kinds_in,
                                 const std::vector<int>& unlabeled_per_task) {
  if (n_tasks < 1) throw ParameterError("make_synthetic_stream: n_tasks must be >= 1");
  TaskStream stream;
  stream.vocab = Vocab::standard();
  stream.seed = seed;
  const Generator gen(stream.vocab);
  std::vector<std::string> kinds = kinds_in.empty() ? default_task_kinds(n_tasks) : kinds_in;
  if (static_cast<int>(kinds.size()) != n_tasks) {
    throw ParameterError("make_synthetic_stream: kinds list must have n_tasks entries");
  }

  RngStream root(seed);
  for (int t = 0; t < n_tasks; ++t) {
    const std::string& kind = kinds[static_cast<size_t>(t)];
    const KindInfo info = kind_info(kind);
    TaskSpec task;
    task.id = t;
    task.name = kind + "-" + std::to_string(t);
    task.kind = kind;
    task.metric = info.metric;
    task.question = stream.vocab.tokenize(info.question);
    for (const auto& a : info.answers) task.answer_lexicon.push_back(stream.vocab.tokenize(a));
    task.augmentation =
        is_classification(kind) ? classification_policy(stream.vocab) : transduction_policy();
    task.g_token = stream.vocab.g_id(t);

    const int n_unlabeled = t < static_cast<int>(unlabeled_per_task.size())
                                ? unlabeled_per_task[static_cast<size_t>(t)]
                                : sizes.unlabeled;
    RngStream rng = root.fork("task", static_cast<uint64_t>(t));

    std::set<std::vector<int>> used;
    auto fresh_context = [&](const std::function<std::vector<int>(RngStream&)>& make) {
      for (int attempt = 0; attempt < 20000; ++attempt) {
        auto c = make(rng);
        if (used.insert(c).second) return c;
      }
      throw ParameterError("make_synthetic_stream: sizes exceed generator capacity for kind '" +
                           kind + "'");
    };

    auto latent = [&](const std::vector<int>& ctx) {
      auto a = generator_latent_answer(stream.vocab, kind, ctx);
      if (!a.has_value()) throw DataError("generator produced a context with no latent label");
      return stream.vocab.tokenize(*a);
    };

    auto fill = [&](std::vector<Sample>& dst, int count, bool with_question, bool with_answer) {
      if (is_classification(kind)) {
        const int n_classes = static_cast<int>(info.answers.size());
        for (int i = 0; i < count; ++i) {
          const int cls = i % n_classes;  // balanced by construction
          auto ctx = fresh_context([&](RngStream& r) {
            if (kind == "topic") return gen.classification_context(r, -1, cls);
            return gen.classification_context(r, cls == 0 ? 0 : 1, -1);
          });
          Sample s;
          s.context = ctx;
          if (with_question) s.question = task.question;
          if (with_answer) s.answer = latent(ctx);
          dst.push_back(std::move(s));
        }
      } else {
        for (int i = 0; i < count; ++i) {
          auto ctx = fresh_context([&](RngStream& r) {
            if (kind == "arith") return gen.arith_context(r);
            return gen.number_sequence(r);
          });
          Sample s;
          s.context = ctx;
          if (with_question) s.question = task.question;
          if (with_answer) s.answer = latent(ctx);
          dst.push_back(std::move(s));
        }
      }
    };

    fill(task.labeled, sizes.labeled, true, true);
    fill(task.unlabeled, n_unlabeled, false, false);
    fill(task.test, sizes.test, true, true);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

std::vector<std::vector<int>> make_pretrain_corpus(const Vocab& vocab, uint64_t seed, int count) {
  const Generator gen(vocab);
  RngStream rng = RngStream(seed).fork("pretrain");
  std::vector<std::vector<int>> out;
  const std::vector<std::string> questions = {"what is the sentiment", "what is the topic",
                                              "is the review good",    "copy the text",
                                              "reverse the text",      "what is the sum"};
  for (int i = 0; i < count; ++i) {
    std::vector<int> ctx;
    const double r = rng.uniform();
    if (r < 0.70) {
      ctx = gen.classification_context(rng, -1, -1);
    } else if (r < 0.85) {
      ctx = gen.number_sequence(rng);
    } else {
      ctx = gen.arith_context(rng);
    }
    if (rng.uniform() < 0.25) {
      ctx.push_back(Vocab::kQ);
      const auto q = vocab.tokenize(questions[rng.uniform_int(questions.size())]);
      ctx.insert(ctx.end(), q.begin(), q.end());
    }
    out.push_back(std::move(ctx));
  }
  return out;
}

// ---- serialization ---------------------------------------------------------

namespace {
nlohmann::json policy_to_json(const AugmentationPolicy& p, const Vocab& v) {
  nlohmann::json syn = nlohmann::json::object();
  std::vector<int> keys;
  for (const auto& [k, _] : p.synonyms) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (int k : keys) {
    nlohmann::json alts = nlohmann::json::array();
    for (int a : p.synonyms.at(k)) alts.push_back(v.word(a));
    syn[v.word(k)] = alts;
  }
  return {{"p_synonym", p.p_synonym}, {"p_swap", p.p_swap},       {"p_delete", p.p_delete},
          {"p_duplicate", p.p_duplicate}, {"rho", p.rho},         {"synonyms", syn}};
}

AugmentationPolicy policy_from_json(const nlohmann::json& j, const Vocab& v) {
  AugmentationPolicy p;
  p.p_synonym = j.at("p_synonym").get<double>();
  p.p_swap = j.at("p_swap").get<double>();
  p.p_delete = j.at("p_delete").get<double>();
  p.p_duplicate = j.at("p_duplicate").get<double>();
  p.rho = j.at("rho").get<double>();
  for (auto it = j.at("synonyms").begin(); it != j.at("synonyms").end(); ++it) {
    std::vector<int> alts;
    for (const auto& a : it.value()) alts.push_back(v.id(a.get<std::string>()));
    p.synonyms[v.id(it.key())] = alts;
  }
  return p;
}
}  // namespace

void save_stream(const TaskStream& stream, const std::string& manifest_path,
                 const std::string& corpus_path) {
  nlohmann::json manifest;
  manifest["seed"] = stream.seed;
  manifest["corpus"] = corpus_path;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : stream.tasks) {
    nlohmann::json jt;
    jt["id"] = t.id;
    jt["name"] = t.name;
    jt["kind"] = t.kind;
    jt["metric"] = metric_name(t.metric);
    jt["question"] = stream.vocab.detokenize(t.question);
    nlohmann::json ans = nlohmann::json::array();
    for (const auto& a : t.answer_lexicon) ans.push_back(stream.vocab.detokenize(a));
    jt["answer_lexicon"] = ans;
    jt["augmentation"] = policy_to_json(t.augmentation, stream.vocab);
    jt["counts"] = {{"labeled", t.labeled.size()},
                    {"unlabeled", t.unlabeled.size()},
                    {"test", t.test.size()}};
    tasks.push_back(jt);
  }
  manifest["tasks"] = tasks;
  std::ofstream mf(manifest_path);
  if (!mf) throw IoError("cannot write manifest " + manifest_path);
  mf << manifest.dump(2) << "\n";

  std::ofstream cf(corpus_path);
  if (!cf) throw IoError("cannot write corpus " + corpus_path);
  for (const auto& t : stream.tasks) {
    auto dump_set = [&](const std::vector<Sample>& set, const char* role) {
      for (const auto& s : set) {
        nlohmann::json r;
        r["task"] = t.id;
        r["role"] = role;
        r["context"] = stream.vocab.detokenize(s.context);
        if (s.question.has_value()) r["question"] = stream.vocab.detokenize(*s.question);
        if (s.answer.has_value()) r["answer"] = stream.vocab.detokenize(*s.answer);
        cf << r.dump() << "\n";
      }
    };
    dump_set(t.labeled, "labeled");
    dump_set(t.unlabeled, "unlabeled");
    dump_set(t.test, "test");
  }
}

TaskStream load_stream(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot read manifest " + manifest_path);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest parse failure: " + std::string(e.what()));
  }
  TaskStream stream;
  stream.vocab = Vocab::standard();
  stream.seed = manifest.value("seed", 0ULL);
  for (const auto& jt : manifest.at("tasks")) {
    TaskSpec t;
    t.id = jt.at("id").get<int>();
    t.name = jt.at("name").get<std::string>();
    t.kind = jt.at("kind").get<std::string>();
    t.metric = metric_from_name(jt.at("metric").get<std::string>());
    t.question = stream.vocab.tokenize(jt.at("question").get<std::string>());
    for (const auto& a : jt.at("answer_lexicon"))
      t.answer_lexicon.push_back(stream.vocab.tokenize(a.get<std::string>()));
    t.augmentation = policy_from_json(jt.at("augmentation"), stream.vocab);
    t.g_token = stream.vocab.g_id(t.id);
    stream.tasks.push_back(std::move(t));
  }

  const std::string corpus_path = manifest.at("corpus").get<std::string>();
  std::ifstream cf(corpus_path);
  if (!cf) throw IoError("cannot read corpus " + corpus_path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(cf, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json r;
    try {
      r = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus parse failure at line " + std::to_string(line_no) + ": " + e.what());
    }
    const int task_id = r.at("task").get<int>();
    if (task_id < 0 || task_id >= static_cast<int>(stream.tasks.size())) {
      throw DataError("corpus record names unknown task " + std::to_string(task_id));
    }
    Sample s;
    s.context = stream.vocab.tokenize(r.at("context").get<std::string>());
    if (r.contains("question")) s.question = stream.vocab.tokenize(r.at("question").get<std::string>());
    if (r.contains("answer")) s.answer = stream.vocab.tokenize(r.at("answer").get<std::string>());
    const std::string role = r.at("role").get<std::string>();
    auto& task = stream.tasks[static_cast<size_t>(task_id)];
    if (role == "labeled") task.labeled.push_back(std::move(s));
    else if (role == "unlabeled") task.unlabeled.push_back(std::move(s));
    else if (role == "test") task.test.push_back(std::move(s));
    else throw DataError("corpus record has unknown role '" + role + "'");
  }
  return stream;
}

}  // namespace sll

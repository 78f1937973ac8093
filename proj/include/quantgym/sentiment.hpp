#pragma once

// Lexicon-based financial sentiment: text preprocessing, rule-based scoring,
// dictionary merge/expansion and corpus evaluation.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "util.hpp"

namespace quantgym::sentiment {

enum class PosTag { noun, verb, adj, adv, other };

inline PosTag parse_tag(std::string_view s) {
  auto t = util::to_lower(s);
  if (t == "noun") return PosTag::noun;
  if (t == "verb") return PosTag::verb;
  if (t == "adj") return PosTag::adj;
  if (t == "adv") return PosTag::adv;
  if (t == "other") return PosTag::other;
  throw DataError("unknown POS tag: " + std::string(s));
}

// Default rule table. Same content as data/sentiment/lemma_rules.tsv.
inline constexpr std::string_view kBuiltinLemmaRules = R"(# kind	pattern	replacement	tag
# exact-word exceptions (irregular forms, function words)
word	is	be	VERB
word	are	be	VERB
word	was	be	VERB
word	were	be	VERB
word	be	be	VERB
word	been	be	VERB
word	being	be	VERB
word	am	be	VERB
word	has	have	VERB
word	have	have	VERB
word	had	have	VERB
word	do	do	VERB
word	does	do	VERB
word	did	do	VERB
word	done	do	VERB
word	will	will	VERB
word	would	would	VERB
word	can	can	VERB
word	could	could	VERB
word	may	may	VERB
word	might	might	VERB
word	shall	shall	VERB
word	should	should	VERB
word	must	must	VERB
word	rose	rise	VERB
word	risen	rise	VERB
word	fell	fall	VERB
word	fallen	fall	VERB
word	grew	grow	VERB
word	grown	grow	VERB
word	sold	sell	VERB
word	bought	buy	VERB
word	won	win	VERB
word	lost	lose	VERB
word	sank	sink	VERB
word	slid	slide	VERB
word	said	say	VERB
word	says	say	VERB
word	gave	give	VERB
word	took	take	VERB
word	made	make	VERB
word	agreed	agree	VERB
word	news	news	NOUN
word	earnings	earnings	NOUN
word	during	during	OTHER
word	bring	bring	VERB
word	spring	spring	NOUN
word	thing	thing	NOUN
word	not	not	OTHER
word	no	no	OTHER
word	never	never	OTHER
word	the	the	OTHER
word	a	a	OTHER
word	an	an	OTHER
word	this	this	OTHER
word	its	its	OTHER
word	his	his	OTHER
word	her	her	OTHER
word	their	their	OTHER
word	our	our	OTHER
word	of	of	OTHER
word	in	in	OTHER
word	on	on	OTHER
word	at	at	OTHER
word	for	for	OTHER
word	to	to	OTHER
word	by	by	OTHER
word	with	with	OTHER
word	without	without	OTHER
word	as	as	OTHER
word	from	from	OTHER
word	than	than	OTHER
word	and	and	OTHER
word	or	or	OTHER
word	but	but	OTHER
word	if	if	OTHER
word	after	after	OTHER
word	before	before	OTHER
word	over	over	OTHER
word	under	under	OTHER
word	amid	amid	OTHER
word	us	us	OTHER
word	less	less	ADJ
word	rally	rally	NOUN
word	supply	supply	NOUN
word	family	family	NOUN
word	only	only	OTHER
word	early	early	ADJ
word	apply	apply	VERB
# suffix rules, first match wins; a rule applies only if the lemma keeps >= 3 letters
suffix	ment	ment	NOUN
suffix	ness	ness	NOUN
suffix	tion	tion	NOUN
suffix	sion	sion	NOUN
suffix	ly	ly	ADV
suffix	ss	ss	NOUN
suffix	us	us	NOUN
suffix	is	is	NOUN
suffix	eed	eed	VERB
suffix	sses	ss	NOUN
suffix	ies	y	NOUN
suffix	ied	y	VERB
suffix	ssed	ss	VERB
suffix	pped	p	VERB
suffix	tted	t	VERB
suffix	gged	g	VERB
suffix	mmed	m	VERB
suffix	nned	n	VERB
suffix	bbed	b	VERB
suffix	dded	d	VERB
suffix	rred	r	VERB
suffix	ained	ain	VERB
suffix	ated	ate	VERB
suffix	ised	ise	VERB
suffix	ized	ize	VERB
suffix	ased	ase	VERB
suffix	uced	uce	VERB
suffix	ined	ine	VERB
suffix	ured	ure	VERB
suffix	uded	ude	VERB
suffix	ided	ide	VERB
suffix	aded	ade	VERB
suffix	bled	ble	VERB
suffix	gled	gle	VERB
suffix	ved	ve	VERB
suffix	ged	ge	VERB
suffix	ced	ce	VERB
suffix	sed	se	VERB
suffix	zed	ze	VERB
suffix	ed		VERB
suffix	pping	p	VERB
suffix	tting	t	VERB
suffix	gging	g	VERB
suffix	mming	m	VERB
suffix	nning	n	VERB
suffix	ssing	ss	VERB
suffix	ating	ate	VERB
suffix	ising	ise	VERB
suffix	izing	ize	VERB
suffix	asing	ase	VERB
suffix	ucing	uce	VERB
suffix	ining	ine	VERB
suffix	uring	ure	VERB
suffix	uding	ude	VERB
suffix	iding	ide	VERB
suffix	ading	ade	VERB
suffix	bling	ble	VERB
suffix	ving	ve	VERB
suffix	ging	ge	VERB
suffix	cing	ce	VERB
suffix	sing	se	VERB
suffix	ing		VERB
suffix	s		NOUN
)";

// Suffix-rule lemmatizer and part-of-speech tagger.
class LemmaRules {
 public:
  struct Suffix {
    std::string suffix;
    std::string replacement;
    PosTag tag;
  };

  static LemmaRules parse(std::string_view text) {
    LemmaRules r;
    std::istringstream in{std::string(text)};
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (util::trim(line).empty() || line[0] == '#') continue;
      auto f = util::split(line, '\t');
      if (f.size() != 4) throw DataError("lemma rules line " + std::to_string(ln) + ": expected 4 columns");
      PosTag tag = parse_tag(f[3]);
      if (f[0] == "word") r.words_[util::to_lower(f[1])] = {util::to_lower(f[2]), tag};
      else if (f[0] == "suffix") r.suffixes_.push_back({util::to_lower(f[1]), util::to_lower(f[2]), tag});
      else throw DataError("lemma rules line " + std::to_string(ln) + ": unknown kind " + f[0]);
    }
    return r;
  }

  static LemmaRules load(const std::string& path) { return parse(util::read_file(path)); }

  static const LemmaRules& builtin() {
    static const LemmaRules rules = parse(kBuiltinLemmaRules);
    return rules;
  }

  // (lemma, tag) of a lower-case word. Unknown words without a matching suffix are nouns.
  std::pair<std::string, PosTag> lemmatize(const std::string& word) const {
    if (auto it = words_.find(word); it != words_.end()) return it->second;
    for (const auto& s : suffixes_) {
      if (word.size() <= s.suffix.size()) continue;
      if (word.compare(word.size() - s.suffix.size(), s.suffix.size(), s.suffix) != 0) continue;
      std::string lemma = word.substr(0, word.size() - s.suffix.size()) + s.replacement;
      if (lemma.size() < kMinLemma) continue;
      return {lemma, s.tag};
    }
    return {word, PosTag::noun};
  }

  friend bool operator==(const LemmaRules& a, const LemmaRules& b) {
    if (a.words_.size() != b.words_.size() || a.suffixes_.size() != b.suffixes_.size()) return false;
    for (std::size_t i = 0; i < a.suffixes_.size(); ++i) {
      const auto &x = a.suffixes_[i], &y = b.suffixes_[i];
      if (x.suffix != y.suffix || x.replacement != y.replacement || x.tag != y.tag) return false;
    }
    return a.words_ == b.words_;
  }

 private:
  static constexpr std::size_t kMinLemma = 3;
  std::map<std::string, std::pair<std::string, PosTag>> words_;
  std::vector<Suffix> suffixes_;
};

struct Token {
  std::string text;   // normalized surface form
  std::string lemma;
  PosTag tag = PosTag::noun;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Document {
  std::string raw_text;
  std::vector<std::vector<Token>> sentences;

  std::size_t num_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
  }

  // Lemmas joined by spaces, sentences terminated by ". ".
  std::string render() const {
    std::string out;
    for (const auto& s : sentences) {
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (k) out += ' ';
        out += s[k].lemma;
      }
      out += ". ";
    }
    return out;
  }
};

inline constexpr std::string_view kCompanyToken = "company_random";

namespace detail {

inline bool is_sentence_end(std::string_view text, std::size_t i) {
  char c = text[i];
  if (c != '.' && c != '!' && c != '?' && c != ';' && c != '\n') return false;
  return i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
}

// Raw tokens of a sentence: whitespace, '-' and '/' separate words.
inline std::vector<std::string> raw_words(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : sentence) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '/') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Lower-cases and keeps letters and '_'; tokens containing digits are numbers and vanish.
inline std::string normalize_word(std::string_view w) {
  std::string out;
  for (char c : w) {
    auto u = static_cast<unsigned char>(c);
    if (std::isdigit(u)) return {};
    if (std::isalpha(u)) out += static_cast<char>(std::tolower(u));
    else if (c == '_') out += c;
  }
  return out;
}

inline std::string strip_edge_punct(std::string_view w) {
  auto edge = [](char c) { return !std::isalnum(static_cast<unsigned char>(c)) && c != '\'' && c != '_'; };
  while (!w.empty() && edge(w.front())) w.remove_prefix(1);
  while (!w.empty() && edge(w.back())) w.remove_suffix(1);
  return std::string(w);
}

}  // namespace detail

// Tokenize, expand abbreviations, normalize (case, punctuation, numbers), replace company
// names by the neutral company token, then lemmatize by part of speech.
inline Document preprocess(std::string_view text, const std::map<std::string, std::string>& abbreviations,
                           const std::vector<std::string>& company_names,
                           const LemmaRules& rules = LemmaRules::builtin()) {
  Document doc;
  doc.raw_text = std::string(text);

  std::vector<std::vector<std::string>> companies;
  for (const auto& name : company_names) {
    std::vector<std::string> toks;
    for (const auto& w : detail::raw_words(name))
      if (auto n = detail::normalize_word(w); !n.empty()) toks.push_back(n);
    if (!toks.empty()) companies.push_back(std::move(toks));
  }
  std::sort(companies.begin(), companies.end(),
            [](const auto& a, const auto& b) { return a.size() > b.size() || (a.size() == b.size() && a < b); });

  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && !detail::is_sentence_end(text, i)) continue;
    std::string_view sentence = text.substr(start, i - start);
    start = i + 1;

    // 1-2: tokenization and abbreviation fixing
    std::vector<std::string> words;
    for (const auto& w : detail::raw_words(sentence)) {
      auto key = util::to_lower(detail::strip_edge_punct(w));
      if (auto it = abbreviations.find(key); it != abbreviations.end()) {
        for (const auto& e : detail::raw_words(it->second)) words.push_back(e);
      } else {
        words.push_back(w);
      }
    }
    // 3: lower-casing, punctuation and number removal
    std::vector<std::string> norm;
    for (const auto& w : words)
      if (auto n = detail::normalize_word(w); !n.empty()) norm.push_back(std::move(n));
    // 4: company replacement, longest name first
    std::vector<std::string> replaced;
    for (std::size_t k = 0; k < norm.size();) {
      bool hit = false;
      for (const auto& c : companies) {
        if (k + c.size() <= norm.size() && std::equal(c.begin(), c.end(), norm.begin() + static_cast<std::ptrdiff_t>(k))) {
          replaced.emplace_back(kCompanyToken);
          k += c.size();
          hit = true;
          break;
        }
      }
      if (!hit) replaced.push_back(norm[k++]);
    }
    // 5: lemmatization
    std::vector<Token> sent;
    for (auto& w : replaced) {
      if (w == kCompanyToken) {
        sent.push_back({w, w, PosTag::noun});
        continue;
      }
      auto [lemma, tag] = rules.lemmatize(w);
      sent.push_back({w, std::move(lemma), tag});
    }
    if (!sent.empty()) doc.sentences.push_back(std::move(sent));
  }
  return doc;
}

inline Document preprocess(std::string_view text) { return preprocess(text, {}, {}); }

enum class Provenance { merged, expanded, override_ };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::merged: return "merged";
    case Provenance::expanded: return "expanded";
    case Provenance::override_: return "override";
  }
  return "merged";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "merged") return Provenance::merged;
  if (s == "expanded") return Provenance::expanded;
  if (s == "override") return Provenance::override_;
  throw DataError("unknown provenance: " + std::string(s));
}

inline constexpr double kMaxValence = 4.0;

struct DictEntry {
  double valence = 0.0;
  Provenance provenance = Provenance::merged;
  friend bool operator==(const DictEntry&, const DictEntry&) = default;
};

// lemma -> valence in [-4, 4]; lemmas are stored lower-case.
class SentimentDictionary {
 public:
  void add(std::string_view lemma, double valence, Provenance prov = Provenance::merged) {
    if (!std::isfinite(valence) || std::abs(valence) > kMaxValence)
      throw DataError("valence out of range for '" + std::string(lemma) + "'");
    auto key = util::to_lower(util::trim(lemma));
    if (key.empty()) throw DataError("empty lemma in dictionary");
    entries_[key] = {valence, prov};
  }

  std::optional<double> valence(const std::string& lemma) const {
    auto it = entries_.find(lemma);
    if (it == entries_.end()) return std::nullopt;
    return it->second.valence;
  }

  bool contains(const std::string& lemma) const { return entries_.count(lemma) > 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<std::string, DictEntry>& entries() const { return entries_; }

  static SentimentDictionary parse(std::string_view text, const std::string& source = "dictionary") {
    SentimentDictionary d;
    std::istringstream in{std::string(text)};
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (util::trim(line).empty() || line[0] == '#') continue;
      auto f = util::split(line, '\t');
      std::string where = source + ":" + std::to_string(ln);
      if (f.size() != 2 && f.size() != 3) throw DataError(where + ": expected lemma<TAB>valence<TAB>provenance");
      auto v = util::parse_double(f[1]);
      if (!v) throw DataError(where + ": bad valence");
      d.add(f[0], *v, f.size() == 3 ? parse_provenance(util::trim(f[2])) : Provenance::merged);
    }
    return d;
  }

  static SentimentDictionary load(const std::string& path) { return parse(util::read_file(path), path); }

  void write(std::ostream& out) const {
    for (const auto& [k, e] : entries_) out << k << '\t' << util::format_double(e.valence) << '\t' << to_string(e.provenance) << '\n';
  }

 private:
  std::map<std::string, DictEntry> entries_;
};

struct ShifterTable {
  std::map<std::string, double> intensifiers;  // additive boost, sign-aligned with the word
  std::set<std::string> negators;
  double negation_factor = -0.5;

  void validate() const {
    if (!(negation_factor > -1.0 && negation_factor < 0.0)) throw ConfigError("negation_factor must lie in (-1, 0)");
    for (const auto& [k, v] : intensifiers)
      if (!std::isfinite(v)) throw ConfigError("non-finite intensifier boost for " + k);
  }

  // TSV rows: `intensifier<TAB>word<TAB>boost`, `negator<TAB>word`, `negation_factor<TAB>value`.
  static ShifterTable parse(std::string_view text) {
    ShifterTable s;
    std::istringstream in{std::string(text)};
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (util::trim(line).empty() || line[0] == '#') continue;
      auto f = util::split(line, '\t');
      std::string where = "shifters:" + std::to_string(ln);
      if (f[0] == "intensifier" && f.size() == 3) {
        auto v = util::parse_double(f[2]);
        if (!v) throw DataError(where + ": bad boost");
        s.intensifiers[util::to_lower(f[1])] = *v;
      } else if (f[0] == "negator" && f.size() >= 2) {
        s.negators.insert(util::to_lower(f[1]));
      } else if (f[0] == "negation_factor" && f.size() == 2) {
        auto v = util::parse_double(f[1]);
        if (!v) throw DataError(where + ": bad factor");
        s.negation_factor = *v;
      } else {
        throw DataError(where + ": unrecognized row");
      }
    }
    s.validate();
    return s;
  }

  static ShifterTable load(const std::string& path) { return parse(util::read_file(path)); }
};

enum class Polarity { negative, neutral, positive };

inline std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
    case Polarity::positive: return "positive";
  }
  return "neutral";
}

inline constexpr double kPolarityThreshold = 0.05;

inline Polarity polarity_of(double compound) {
  if (compound >= kPolarityThreshold) return Polarity::positive;
  if (compound <= -kPolarityThreshold) return Polarity::negative;
  return Polarity::neutral;
}

struct ScoringOptions {
  double alpha = 15.0;
  std::size_t negation_window = 3;
  std::size_t intensifier_window = 3;
  // Weight of sentence k; empty means equal weights of 1.
  std::function<double(std::size_t index, std::size_t count)> sentence_weight;
};

struct SentimentScore {
  double compound = 0.0;
  Polarity polarity = Polarity::neutral;
  std::vector<double> per_sentence;
};

inline double normalize_compound(double total, double alpha) {
  if (total == 0.0) return 0.0;
  return std::clamp(total / std::sqrt(total * total + alpha), -1.0, 1.0);
}

// Clause boundaries sit before a verb that does not continue a verb group
// (a verb right after another verb, an adverb or a negator stays in the clause).
inline std::vector<std::size_t> clause_starts(const std::vector<Token>& sent, const ShifterTable& shifters) {
  std::vector<std::size_t> starts{0};
  for (std::size_t k = 1; k < sent.size(); ++k) {
    if (sent[k].tag != PosTag::verb) continue;
    const auto& prev = sent[k - 1];
    if (prev.tag == PosTag::verb || prev.tag == PosTag::adv || shifters.negators.count(prev.lemma)) continue;
    starts.push_back(k);
  }
  return starts;
}

inline SentimentScore score_document(const Document& doc, const SentimentDictionary& dict,
                                     const ShifterTable& shifters, const ScoringOptions& opts = {}) {
  SentimentScore score;
  double total = 0.0;
  const std::size_t ns = doc.sentences.size();
  for (std::size_t si = 0; si < ns; ++si) {
    const auto& sent = doc.sentences[si];
    auto starts = clause_starts(sent, shifters);
    starts.push_back(sent.size());
    double s = 0.0;
    for (std::size_t c = 0; c + 1 < starts.size(); ++c) {
      const std::size_t lo = starts[c], hi = starts[c + 1];
      for (std::size_t k = lo; k < hi; ++k) {
        auto v = dict.valence(sent[k].lemma);
        if (!v && sent[k].text != sent[k].lemma) v = dict.valence(sent[k].text);
        if (!v || *v == 0.0) continue;
        double val = *v;
        double boost = 0.0;
        for (std::size_t j = k > lo + opts.intensifier_window ? k - opts.intensifier_window : lo; j < k; ++j)
          if (auto it = shifters.intensifiers.find(sent[j].lemma); it != shifters.intensifiers.end()) boost += it->second;
        val += val > 0 ? boost : -boost;
        bool negated = false;
        for (std::size_t j = k > lo + opts.negation_window ? k - opts.negation_window : lo; j < k; ++j)
          negated = negated || shifters.negators.count(sent[j].lemma) > 0;
        if (negated) val *= shifters.negation_factor;
        s += val;
      }
    }
    score.per_sentence.push_back(s);
    total += (opts.sentence_weight ? opts.sentence_weight(si, ns) : 1.0) * s;
  }
  score.compound = normalize_compound(total, opts.alpha);
  score.polarity = polarity_of(score.compound);
  return score;
}

// ---- dictionary construction ---------------------------------------------------

struct MergeResult {
  SentimentDictionary dictionary;
  std::vector<std::string> contradictions;  // unresolved opposite-sign lemmas, excluded
  std::vector<std::string> warnings;
};

// Union of both lexicons. Opposite signs are contradictions unless resolved; on
// same-sign overlap the financial valence wins.
inline MergeResult merge_dictionaries(const SentimentDictionary& financial, const SentimentDictionary& general,
                                      const std::map<std::string, double>& resolutions) {
  MergeResult r;
  std::set<std::string> conflicts;
  for (const auto& [k, e] : general.entries()) {
    auto fin = financial.valence(k);
    if (!fin) {
      r.dictionary.add(k, e.valence, Provenance::merged);
    } else if ((*fin > 0 && e.valence < 0) || (*fin < 0 && e.valence > 0)) {
      conflicts.insert(k);
    }
  }
  for (const auto& [k, e] : financial.entries())
    if (!conflicts.count(k)) r.dictionary.add(k, e.valence, Provenance::merged);
  for (const auto& k : conflicts) {
    if (auto it = resolutions.find(k); it != resolutions.end()) r.dictionary.add(k, it->second, Provenance::override_);
    else r.contradictions.push_back(k);
  }
  for (const auto& [k, v] : resolutions)
    if (!conflicts.count(k)) r.warnings.push_back("resolution for '" + k + "' ignored: lemma is not in conflict");
  return r;
}

// word -> list of (synonym, path similarity in [0,1]).
class SynonymGraph {
 public:
  void add(std::string_view word, std::string_view synonym, double similarity) {
    if (!(similarity >= 0.0 && similarity <= 1.0)) throw DataError("path similarity must lie in [0,1]");
    edges_[util::to_lower(word)].emplace_back(util::to_lower(synonym), similarity);
  }

  const std::vector<std::pair<std::string, double>>& synonyms(const std::string& word) const {
    static const std::vector<std::pair<std::string, double>> none;
    auto it = edges_.find(word);
    return it == edges_.end() ? none : it->second;
  }

  static SynonymGraph load(const std::string& path) {
    SynonymGraph g;
    auto lines = util::read_lines(path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (util::trim(lines[ln]).empty() || lines[ln][0] == '#') continue;
      auto f = util::split(lines[ln], '\t');
      auto v = f.size() == 3 ? util::parse_double(f[2]) : std::nullopt;
      if (!v) throw DataError(path + ":" + std::to_string(ln + 1) + ": expected word<TAB>synonym<TAB>path_similarity");
      g.add(f[0], f[1], *v);
    }
    return g;
  }

 private:
  std::map<std::string, std::vector<std::pair<std::string, double>>> edges_;
};

struct Candidate {
  std::string word;
  std::string synonym;
  double valence = 0.0;
  double path_similarity = 0.0;
};

struct ExpansionResult {
  std::vector<Candidate> candidates;
  std::vector<std::string> low_subjectivity;  // dropped by the subjectivity filter
  std::vector<std::string> no_labeled_synonym;
};

inline constexpr double kMinSubjectivity = 0.2;

// (a) unlabeled = lexicon minus merged keys, (b) best labeled synonym by path similarity
// (ties -> lexicographically smallest synonym), (c) drop subjectivity < 0.2.
inline ExpansionResult expand_dictionary(const SentimentDictionary& merged, const std::vector<std::string>& master_lexicon,
                                         const SynonymGraph& synonyms,
                                         const std::function<double(const std::string&)>& subjectivity) {
  if (master_lexicon.empty()) throw DataError("master lexicon is empty");
  std::set<std::string> words;
  for (const auto& w : master_lexicon)
    if (auto k = util::to_lower(util::trim(w)); !k.empty()) words.insert(k);
  ExpansionResult r;
  for (const auto& w : words) {
    if (merged.contains(w)) continue;
    const std::pair<std::string, double>* best = nullptr;
    for (const auto& edge : synonyms.synonyms(w)) {
      if (!merged.contains(edge.first)) continue;
      if (!best || edge.second > best->second || (edge.second == best->second && edge.first < best->first)) best = &edge;
    }
    if (!best) {
      r.no_labeled_synonym.push_back(w);
      continue;
    }
    if (subjectivity(w) < kMinSubjectivity) {
      r.low_subjectivity.push_back(w);
      continue;
    }
    r.candidates.push_back({w, best->first, *merged.valence(best->first), best->second});
  }
  return r;
}

inline std::map<std::string, double> load_subjectivity(const std::string& path) {
  std::map<std::string, double> out;
  auto lines = util::read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (util::trim(lines[ln]).empty() || lines[ln][0] == '#') continue;
    auto f = util::split(lines[ln], '\t');
    auto v = f.size() == 2 ? util::parse_double(f[1]) : std::nullopt;
    if (!v || *v < 0.0 || *v > 1.0) throw DataError(path + ":" + std::to_string(ln + 1) + ": expected word<TAB>subjectivity in [0,1]");
    out[util::to_lower(f[0])] = *v;
  }
  return out;
}

// Missing words have subjectivity 0.
inline std::function<double(const std::string&)> subjectivity_lookup(std::map<std::string, double> table) {
  return [table = std::move(table)](const std::string& w) {
    auto it = table.find(w);
    return it == table.end() ? 0.0 : it->second;
  };
}

enum class OverrideAction { accept, adjust, reject };

struct Override {
  OverrideAction action = OverrideAction::accept;
  std::optional<double> valence;
};

inline std::map<std::string, Override> load_overrides(const std::string& path) {
  std::map<std::string, Override> out;
  auto lines = util::read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (util::trim(lines[ln]).empty() || lines[ln][0] == '#') continue;
    auto f = util::split(lines[ln], '\t');
    std::string where = path + ":" + std::to_string(ln + 1);
    if (f.size() < 2 || f.size() > 3) throw DataError(where + ": expected word<TAB>action<TAB>valence?");
    Override o;
    auto act = util::to_lower(util::trim(f[1]));
    if (act == "accept") o.action = OverrideAction::accept;
    else if (act == "adjust") o.action = OverrideAction::adjust;
    else if (act == "reject") o.action = OverrideAction::reject;
    else throw DataError(where + ": unknown action " + act);
    if (f.size() == 3 && !util::trim(f[2]).empty()) {
      o.valence = util::parse_double(f[2]);
      if (!o.valence) throw DataError(where + ": bad valence");
    }
    if (o.action == OverrideAction::adjust && !o.valence) throw DataError(where + ": adjust requires a valence");
    out[util::to_lower(util::trim(f[0]))] = o;
  }
  return out;
}

struct OverrideResult {
  SentimentDictionary additions;
  std::vector<std::string> pending;   // similarity < 0.5 without a manual decision
  std::vector<std::string> rejected;
  std::vector<std::string> warnings;
};

inline constexpr double kAutoAcceptSimilarity = 0.5;

inline OverrideResult apply_overrides(const std::vector<Candidate>& candidates,
                                      const std::map<std::string, Override>& overrides) {
  OverrideResult r;
  std::set<std::string> names;
  for (const auto& c : candidates) {
    names.insert(c.word);
    auto it = overrides.find(c.word);
    if (it != overrides.end()) {
      const auto& o = it->second;
      if (o.action == OverrideAction::reject) r.rejected.push_back(c.word);
      else r.additions.add(c.word, o.valence.value_or(c.valence), Provenance::override_);
    } else if (c.path_similarity >= kAutoAcceptSimilarity) {
      r.additions.add(c.word, c.valence, Provenance::expanded);
    } else {
      r.pending.push_back(c.word);
    }
  }
  for (const auto& [w, o] : overrides)
    if (!names.count(w)) r.warnings.push_back("override for '" + w + "' does not match any candidate");
  return r;
}

// ---- evaluation ------------------------------------------------------------------

struct LabeledItem {
  double label = 0.0;  // [-100, 100]
  std::string text;
};

struct LabeledCorpus {
  std::vector<LabeledItem> items;

  // TSV `valence_label<TAB>headline`.
  static LabeledCorpus load(const std::string& path) {
    LabeledCorpus c;
    auto lines = util::read_lines(path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (util::trim(lines[ln]).empty() || lines[ln][0] == '#') continue;
      auto tab = lines[ln].find('\t');
      std::string where = path + ":" + std::to_string(ln + 1);
      if (tab == std::string::npos) throw DataError(where + ": expected valence_label<TAB>headline");
      auto v = util::parse_double(std::string_view(lines[ln]).substr(0, tab));
      if (!v || *v < -100.0 || *v > 100.0) throw DataError(where + ": label must lie in [-100, 100]");
      c.items.push_back({*v, lines[ln].substr(tab + 1)});
    }
    return c;
  }
};

// Label polarity uses the same +-0.05 band on the label rescaled to [-1, 1].
inline Polarity label_polarity(double label) { return polarity_of(label / 100.0); }

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

struct TextContext {
  std::map<std::string, std::string> abbreviations;
  std::vector<std::string> company_names;
  const LemmaRules* rules = &LemmaRules::builtin();

  Document preprocess(std::string_view text) const {
    return sentiment::preprocess(text, abbreviations, company_names, *rules);
  }
};

struct EvaluationResult {
  double polarity_accuracy = 0.0;
  std::optional<double> valence_correlation;  // empty when either series is constant
  std::vector<double> compounds;

  double correlation() const {
    if (!valence_correlation) throw DataError("valence correlation undefined: constant predictions or labels");
    return *valence_correlation;
  }
};

inline EvaluationResult evaluate(const LabeledCorpus& corpus, const SentimentDictionary& dict,
                                 const ShifterTable& shifters, const TextContext& ctx = {},
                                 const ScoringOptions& opts = {}) {
  if (corpus.items.empty()) throw DataError("evaluation corpus is empty");
  EvaluationResult r;
  std::vector<double> labels;
  std::size_t hits = 0;
  for (const auto& item : corpus.items) {
    auto s = score_document(ctx.preprocess(item.text), dict, shifters, opts);
    r.compounds.push_back(s.compound);
    labels.push_back(item.label);
    hits += s.polarity == label_polarity(item.label);
  }
  r.polarity_accuracy = static_cast<double>(hits) / static_cast<double>(corpus.items.size());
  r.valence_correlation = pearson(r.compounds, labels);
  return r;
}

inline std::map<std::string, std::string> load_abbreviations(const std::string& path) {
  std::map<std::string, std::string> out;
  for (const auto& line : util::read_lines(path)) {
    if (util::trim(line).empty() || line[0] == '#') continue;
    auto f = util::split(line, '\t');
    if (f.size() != 2) throw DataError(path + ": expected abbreviation<TAB>expansion");
    out[util::to_lower(util::trim(f[0]))] = std::string(util::trim(f[1]));
  }
  return out;
}

inline std::vector<std::string> load_word_list(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& line : util::read_lines(path))
    if (auto w = util::trim(line); !w.empty() && w[0] != '#') out.emplace_back(w);
  return out;
}

}  // namespace quantgym::sentiment

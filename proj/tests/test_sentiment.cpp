#include <catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"

using namespace qt;
using namespace quantgym::sentiment;
using Catch::Approx;

namespace {

std::vector<std::string> lemmas(const Document& d) {
  std::vector<std::string> out;
  for (const auto& s : d.sentences)
    for (const auto& t : s) out.push_back(t.lemma);
  return out;
}

SentimentDictionary dict_of(std::initializer_list<std::pair<const char*, double>> xs) {
  SentimentDictionary d;
  for (auto [k, v] : xs) d.add(k, v);
  return d;
}

struct Fixture {
  SentimentDictionary dict = SentimentDictionary::load(data_path("data/sentiment/dictionary.tsv"));
  ShifterTable shifters = ShifterTable::load(data_path("data/sentiment/shifters.tsv"));
  TextContext ctx{load_abbreviations(data_path("data/sentiment/abbreviations.tsv")),
                  load_word_list(data_path("data/sentiment/companies.txt"))};
};

// textbook n*sum(xy) - sum(x)sum(y) form
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  return (n * sxy - sx * sy) / (std::sqrt(n * sxx - sx * sx) * std::sqrt(n * syy - sy * sy));
}

}  // namespace

TEST_CASE("preprocess examples") {
  CHECK(preprocess("").sentences.empty());
  auto d = preprocess("BestBuy beats estimates", {}, {"BestBuy"});
  CHECK(lemmas(d) == std::vector<std::string>{"company_random", "beat", "estimate"});
  auto dev = preprocess("Costs developed");
  CHECK(dev.sentences.at(0).at(1).lemma == "develop");
  CHECK(dev.sentences.at(0).at(1).tag == PosTag::verb);
}

TEST_CASE("preprocess expands abbreviations, strips numbers and punctuation") {
  Fixture f;
  auto d = f.ctx.preprocess("Goodyear shares plunge sharply after a weak Q3, 2021!  Revenue won't rise.");
  REQUIRE(d.sentences.size() == 2);
  CHECK(lemmas(d) == std::vector<std::string>{"company_random", "share", "plunge", "sharply", "after", "a", "weak",
                                              "third", "quarter", "revenue", "will", "not", "rise"});
  auto multi = preprocess("Strongbridge Capital beats Strongbridge", {}, {"Strongbridge", "Strongbridge Capital"});
  CHECK(lemmas(multi) == std::vector<std::string>{"company_random", "beat", "company_random"});
}

TEST_CASE("preprocess is idempotent on its own output") {
  Fixture f;
  std::vector<std::string> texts = {"BestBuy beats estimates", "Profits do not rise",
                                    "Goodyear shares plunge sharply after a weak Q3", "Rising costs; lower margins."};
  for (const auto& line : load_word_list(data_path("data/sentiment/headlines.txt"))) texts.push_back(line);
  for (const auto& t : texts) {
    auto once = f.ctx.preprocess(t);
    auto twice = f.ctx.preprocess(once.render());
    CHECK(lemmas(twice) == lemmas(once));
    CHECK(twice.render() == once.render());
  }
}

TEST_CASE("builtin lemma rules equal the shipped rule file") {
  CHECK(LemmaRules::builtin() == LemmaRules::load(data_path("data/sentiment/lemma_rules.tsv")));
}

TEST_CASE("scoring examples") {
  auto dict = dict_of({{"rise", 1.5}});
  ShifterTable sh;
  sh.negators = {"not"};
  sh.negation_factor = -0.5;
  auto empty = score_document(preprocess(""), dict, sh);
  CHECK(empty.compound == 0.0);
  CHECK(empty.polarity == Polarity::neutral);

  auto pos = score_document(preprocess("profits rise"), dict, sh);
  CHECK(pos.compound == Approx(1.5 / std::sqrt(1.5 * 1.5 + 15.0)).epsilon(1e-14));
  CHECK(pos.compound == Approx(0.3612).margin(5e-5));
  CHECK(pos.polarity == Polarity::positive);

  auto neg = score_document(preprocess("profits do not rise"), dict, sh);
  CHECK(neg.per_sentence.at(0) == Approx(-0.75).epsilon(1e-15));
  CHECK(neg.compound == Approx(-0.75 / std::sqrt(0.75 * 0.75 + 15.0)).epsilon(1e-14));
  CHECK(neg.compound == Approx(-0.1900).margin(2e-4));
}

TEST_CASE("intensifiers are sign aligned and negation reaches three tokens back") {
  auto dict = dict_of({{"gain", 1.5}, {"loss", -2.0}});
  ShifterTable sh;
  sh.intensifiers = {{"sharply", 0.3}};
  sh.negators = {"not"};
  auto s = [&](const char* t) { return score_document(preprocess(t), dict, sh).per_sentence.at(0); };
  CHECK(s("sharply gain") == Approx(1.8));
  CHECK(s("sharply loss") == Approx(-2.3));
  CHECK(s("not a big gain") == Approx(-0.75));
  CHECK(s("not a very big gain") == Approx(1.5));
}

TEST_CASE("fixture corpus scores and metrics") {
  Fixture f;
  auto corpus = LabeledCorpus::load(data_path("data/sentiment/corpus.tsv"));
  REQUIRE(corpus.items.size() == 4);
  // hand-scored raw totals
  const std::vector<double> raw = {1.5 + 0.293 + 1.8, -0.75 - 1.7, -2.0 + 1.9, -2.4 - 1.6};
  for (std::size_t i = 0; i < 4; ++i) {
    auto sc = score_document(f.ctx.preprocess(corpus.items[i].text), f.dict, f.shifters);
    double total = 0.0;
    for (double v : sc.per_sentence) total += v;
    CHECK(total == Approx(raw[i]).margin(1e-12));
    CHECK(sc.compound == Approx(raw[i] / std::sqrt(raw[i] * raw[i] + 15.0)).margin(1e-12));
  }
  auto ev = evaluate(corpus, f.dict, f.shifters, f.ctx);
  CHECK(ev.polarity_accuracy == 0.75);
  std::vector<double> labels;
  for (const auto& it : corpus.items) labels.push_back(it.label);
  CHECK(ev.correlation() == Approx(pearson_oracle(ev.compounds, labels)).epsilon(1e-12));
}

TEST_CASE("evaluation edge cases") {
  auto dict = dict_of({{"gain", 1.5}, {"loss", -2.0}});
  ShifterTable sh;
  LabeledCorpus perfect{{{50, "gain"}, {-40, "loss"}, {0, "flat"}}};
  CHECK(evaluate(perfect, dict, sh).polarity_accuracy == 1.0);
  LabeledCorpus constant{{{50, "gain"}, {60, "gain"}}};
  auto ev = evaluate(constant, dict, sh);
  CHECK(ev.polarity_accuracy == 1.0);
  CHECK_FALSE(ev.valence_correlation.has_value());
  CHECK_THROWS_AS(ev.correlation(), DataError);
  CHECK_THROWS_AS(evaluate(LabeledCorpus{}, dict, sh), DataError);
  CHECK(*pearson({0.1, -0.2, 0.5}, {10, -20, 50}) == Approx(1.0));
}

TEST_CASE("compound is bounded and monotone in appended positive words") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> vocab = {"gain", "loss", "rise", "weak", "firm", "share", "outlook", "strong"};
  auto dict = dict_of({{"gain", 1.5}, {"loss", -2.0}, {"rise", 0.7}, {"weak", -1.7}, {"strong", 3.9}});
  ShifterTable sh;
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(0, 12);
  for (int rep = 0; rep < 300; ++rep) {
    std::string text;
    for (std::size_t k = len(rng); k > 0; --k) text += vocab[pick(rng)] + " ";
    auto base = score_document(preprocess(text), dict, sh);
    CHECK(base.compound >= -1.0);
    CHECK(base.compound <= 1.0);
    auto more = score_document(preprocess(text + "gain"), dict, sh);
    CHECK(more.compound >= base.compound);
    CHECK(score_document(preprocess(text), dict, sh).compound == base.compound);
  }
}

TEST_CASE("merge examples and invariant") {
  auto disjoint = merge_dictionaries(dict_of({{"bull", 0.8}}), dict_of({{"happy", 2.2}}), {});
  CHECK(disjoint.dictionary.size() == 2);
  CHECK(disjoint.contradictions.empty());

  auto conflict = merge_dictionaries(dict_of({{"bull", 0.8}}), dict_of({{"bull", -0.3}}), {});
  CHECK_FALSE(conflict.dictionary.contains("bull"));
  CHECK(conflict.contradictions == std::vector<std::string>{"bull"});

  auto resolved = merge_dictionaries(dict_of({{"bull", 0.8}}), dict_of({{"bull", -0.3}}), {{"bull", 0.8}});
  CHECK(*resolved.dictionary.valence("bull") == 0.8);
  CHECK(resolved.contradictions.empty());

  auto same = merge_dictionaries(dict_of({{"loss", -2.0}}), dict_of({{"loss", -1.8}}), {{"gain", 1.0}});
  CHECK(*same.dictionary.valence("loss") == -2.0);
  CHECK(same.warnings.size() == 1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v(-4.0, 4.0);
  std::uniform_int_distribution<int> w(0, 30);
  for (int rep = 0; rep < 50; ++rep) {
    SentimentDictionary a, b;
    for (int k = 0; k < 20; ++k) {
      a.add("w" + std::to_string(w(rng)), v(rng));
      b.add("w" + std::to_string(w(rng)), v(rng));
    }
    auto m = merge_dictionaries(a, b, {});
    for (const auto& c : m.contradictions) CHECK_FALSE(m.dictionary.contains(c));
    for (const auto& [k, e] : m.dictionary.entries()) CHECK((a.contains(k) || b.contains(k)));
  }
}

TEST_CASE("expansion picks the most similar labeled synonym and filters subjectivity") {
  auto merged = dict_of({{"rally", 1.7}, {"gain", 1.5}, {"crash", -2.6}});
  SynonymGraph g;
  g.add("surge", "gain", 0.3);
  g.add("surge", "rally", 0.9);
  g.add("meh", "gain", 0.9);
  g.add("rally", "gain", 0.9);
  g.add("soar", "rally", 0.8);
  g.add("soar", "gain", 0.8);
  std::map<std::string, double> subj{{"surge", 0.6}, {"meh", 0.1}, {"soar", 0.5}, {"rally", 0.9}};
  auto r = expand_dictionary(merged, {"surge", "meh", "rally", "soar", "table"}, g, subjectivity_lookup(subj));
  REQUIRE(r.candidates.size() == 2);
  CHECK(r.candidates[0].word == "soar");
  CHECK(r.candidates[0].synonym == "gain");
  CHECK(r.candidates[1].word == "surge");
  CHECK(r.candidates[1].synonym == "rally");
  CHECK(r.candidates[1].valence == 1.7);
  CHECK(r.candidates[1].path_similarity == 0.9);
  CHECK(r.low_subjectivity == std::vector<std::string>{"meh"});
  CHECK(r.no_labeled_synonym == std::vector<std::string>{"table"});
  for (const auto& c : r.candidates) CHECK_FALSE(merged.contains(c.word));
  CHECK_THROWS_AS(expand_dictionary(merged, {}, g, subjectivity_lookup(subj)), DataError);
}

TEST_CASE("override examples") {
  std::vector<Candidate> cands = {{"soar", "rally", 1.7, 0.8}, {"gloomy", "weak", -1.7, 0.4}, {"slump", "crash", -2.6, 0.4}};
  auto auto_only = apply_overrides(cands, {});
  CHECK(*auto_only.additions.valence("soar") == 1.7);
  CHECK(auto_only.additions.entries().at("soar").provenance == Provenance::expanded);
  CHECK(auto_only.pending == std::vector<std::string>{"gloomy", "slump"});

  std::map<std::string, Override> ov{{"gloomy", {OverrideAction::adjust, 1.0}}, {"slump", {OverrideAction::reject, {}}}};
  auto r = apply_overrides(cands, ov);
  CHECK(*r.additions.valence("gloomy") == 1.0);
  CHECK(r.additions.entries().at("gloomy").provenance == Provenance::override_);
  CHECK_FALSE(r.additions.contains("slump"));
  CHECK(r.rejected == std::vector<std::string>{"slump"});
  CHECK(r.pending.empty());
}

TEST_CASE("dictionary build on the shipped fixtures") {
  auto fin = SentimentDictionary::load(data_path("data/sentiment/financial.tsv"));
  auto gen = SentimentDictionary::load(data_path("data/sentiment/general.tsv"));
  std::map<std::string, double> res;
  auto resolutions = SentimentDictionary::load(data_path("data/sentiment/resolutions.tsv"));
  for (const auto& [k, e] : resolutions.entries()) res[k] = e.valence;
  auto merged = merge_dictionaries(fin, gen, res);
  CHECK(merged.contradictions == std::vector<std::string>{"bull"});
  CHECK(*merged.dictionary.valence("volatile") == -1.2);
  CHECK(merged.warnings.size() == 1);

  auto exp = expand_dictionary(merged.dictionary, load_word_list(data_path("data/sentiment/lexicon.txt")),
                               SynonymGraph::load(data_path("data/sentiment/synonyms.tsv")),
                               subjectivity_lookup(load_subjectivity(data_path("data/sentiment/subjectivity.tsv"))));
  std::vector<std::string> words;
  for (const auto& c : exp.candidates) words.push_back(c.word);
  CHECK(words == std::vector<std::string>{"gloomy", "slump", "soar", "surge", "tumble"});
  REQUIRE(exp.candidates.size() == 5);
  CHECK(exp.candidates[2].synonym == "gain");
  CHECK(exp.low_subjectivity == std::vector<std::string>{"upbeat"});
  CHECK(exp.no_labeled_synonym == std::vector<std::string>{"steady", "table"});

  auto ov = apply_overrides(exp.candidates, load_overrides(data_path("data/sentiment/overrides.tsv")));
  CHECK(ov.additions.size() == 3);
  CHECK(*ov.additions.valence("slump") == -2.0);
  CHECK(*ov.additions.valence("soar") == 1.5);
  CHECK(*ov.additions.valence("surge") == 1.7);
  CHECK(ov.rejected == std::vector<std::string>{"tumble"});
  CHECK(ov.pending == std::vector<std::string>{"gloomy"});
  REQUIRE(ov.warnings.size() == 1);
  CHECK(ov.warnings[0].find("phantom") != std::string::npos);
}

TEST_CASE("resource parsing errors") {
  CHECK_THROWS_AS(SentimentDictionary::parse("gain\t9\n"), DataError);
  CHECK_THROWS_AS(SentimentDictionary::parse("gain\n"), DataError);
  CHECK_THROWS_AS(ShifterTable::parse("negation_factor\t0.5\n"), ConfigError);
  CHECK_THROWS_AS(ShifterTable::parse("booster\tvery\t1\n"), DataError);
  SynonymGraph g;
  CHECK_THROWS_AS(g.add("a", "b", 1.5), DataError);
  std::ostringstream out;
  dict_of({{"gain", 1.5}, {"loss", -2}}).write(out);
  CHECK(SentimentDictionary::parse(out.str()).entries() == dict_of({{"gain", 1.5}, {"loss", -2}}).entries());
}

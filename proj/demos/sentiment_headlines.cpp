// Scores the fixture headlines with the shipped mini-dictionary.

#include <iostream>

#include "quantgym/sentiment.hpp"

using namespace quantgym::sentiment;

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data/sentiment";
  auto dict = SentimentDictionary::load(dir + "/dictionary.tsv");
  auto shifters = ShifterTable::load(dir + "/shifters.tsv");
  auto corpus = LabeledCorpus::load(dir + "/corpus.tsv");
  TextContext ctx;
  ctx.company_names = load_word_list(dir + "/companies.txt");
  for (const auto& item : corpus.items) {
    auto doc = ctx.preprocess(item.text);
    auto s = score_document(doc, dict, shifters);
    std::cout << item.label << "\t" << s.compound << "\t" << to_string(s.polarity) << "\t" << doc.render() << "\n";
  }
  auto r = evaluate(corpus, dict, shifters, ctx);
  std::cout << "accuracy " << r.polarity_accuracy << "\n";
  if (r.valence_correlation) std::cout << "correlation " << *r.valence_correlation << "\n";
}

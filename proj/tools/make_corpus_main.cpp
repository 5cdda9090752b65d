#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ltw/corpus.hpp"

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate a deterministic synthetic corpus"};

    ltw::CorpusSpec spec;
    std::string train_path = "train.txt";
    std::string eval_path = "eval.txt";
    app.add_option("--train-docs", spec.train_docs, "training documents");
    app.add_option("--eval-docs", spec.eval_docs, "evaluation documents");
    app.add_option("--train-doc-words", spec.train_doc_words, "min words per training doc");
    app.add_option("--eval-doc-words", spec.eval_doc_words, "min words per evaluation doc");
    app.add_option("--seed", spec.seed, "corpus seed");
    app.add_option("--train-out", train_path, "training corpus file");
    app.add_option("--eval-out", eval_path, "evaluation corpus file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto corpus = ltw::synth_corpus(spec);
        write_file(train_path, corpus.train);
        if (spec.eval_docs > 0) write_file(eval_path, corpus.eval);
        std::cout << "train_bytes=" << corpus.train.size()
                  << " eval_bytes=" << corpus.eval.size() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

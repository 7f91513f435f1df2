#pragma once

#include <string>
#include <vector>

namespace ncst {

/// Token ids, with the original token strings kept around for reports and
/// for writing datasets back out.
struct Sentence {
    std::vector<int> ids;
    std::vector<std::string> surface;

    int length() const { return static_cast<int>(surface.empty() ? ids.size() : surface.size()); }
    bool operator==(const Sentence& o) const { return ids == o.ids; }
};

/// An ordered list of sentences; the unit scored for coherence.
struct TextChunk {
    std::vector<Sentence> sentences;

    bool empty() const { return sentences.empty(); }
    int size() const { return static_cast<int>(sentences.size()); }
    bool operator==(const TextChunk& o) const { return sentences == o.sentences; }
};

struct Example {
    std::string review_id;
    TextChunk source;
    TextChunk target;
};

/// Lowercase, separate punctuation into standalone tokens, split on
/// whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// Group a token stream into sentences at terminal punctuation (. ! ?),
/// the terminal token staying with its sentence. A trailing fragment
/// without terminal punctuation forms its own sentence.
std::vector<std::vector<std::string>> split_sentences(const std::vector<std::string>& tokens);

}  // namespace ncst

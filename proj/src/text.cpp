#include "ncst/text.hpp"

#include <cctype>

namespace ncst {

namespace {
bool is_punct_char(char c) {
    switch (c) {
        case '.':
        case ',':
        case '!':
        case '?':
        case ';':
        case ':':
        case '"':
        case '(':
        case ')':
        case '[':
        case ']':
        case '$':
        case '%':
        case '&':
        case '/':
            return true;
        default:
            return false;
    }
}

bool is_terminal(const std::string& tok) {
    return tok == "." || tok == "!" || tok == "?";
}
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_punct_char(c)) {
            flush();
            out.push_back(std::string(1, c));
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::vector<std::vector<std::string>> split_sentences(const std::vector<std::string>& tokens) {
    std::vector<std::vector<std::string>> sentences;
    std::vector<std::string> cur;
    for (const auto& tok : tokens) {
        cur.push_back(tok);
        if (is_terminal(tok)) {
            sentences.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) sentences.push_back(cur);
    return sentences;
}

}  // namespace ncst

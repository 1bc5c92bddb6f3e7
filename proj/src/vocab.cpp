#include "ipga/vocab.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ipga {

namespace {

const char* kSpecials[] = {"[PAD]", "[CLS]", "[BOS]", "[EOS]"};

} // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (int i = 0; i < 4; ++i) {
        if (static_cast<int>(tokens_.size()) <= i || tokens_[i] != kSpecials[i])
            throw std::invalid_argument("vocabulary: special tokens must lead in fixed order");
    }
    std::unordered_map<std::string, int> seen;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!seen.emplace(tokens_[i], static_cast<int>(i)).second)
            throw std::invalid_argument("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
}

Vocabulary Vocabulary::standard() {
    std::vector<std::string> t = {
        "[PAD]", "[CLS]", "[BOS]", "[EOS]",
        // colors (RGB cube corners)
        "black", "red", "green", "blue", "yellow", "magenta", "cyan", "white",
        // shapes
        "circle", "square", "triangle",
        // sizes
        "small", "large",
        // grid positions
        "top_left", "top_center", "top_right",
        "middle_left", "center", "middle_right",
        "bottom_left", "bottom_center", "bottom_right",
        // template words
        "background", "what", "color", "is", "the", "shape", "at",
        "there", "a", "where", "of", "no", "yes",
    };
    return Vocabulary(std::move(t));
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: token id out of range");
    return tokens_[id];
}

int Vocabulary::id(const std::string& word) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == word) return static_cast<int>(i);
    }
    throw std::invalid_argument("vocabulary: unknown word '" + word + "'");
}

bool Vocabulary::contains(const std::string& word) const {
    for (const auto& t : tokens_)
        if (t == word) return true;
    return false;
}

std::vector<int> Vocabulary::encode_words(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream is(text);
    std::string w;
    while (is >> w) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids, bool skip_special) const {
    std::string out;
    for (int i : ids) {
        if (skip_special && i < 4) continue;
        if (!out.empty()) out += ' ';
        out += token(i);
    }
    return out;
}

std::vector<int> Vocabulary::encode_for_encoder(const std::string& text) const {
    std::vector<int> ids = {kCls};
    auto body = encode_words(text);
    ids.insert(ids.end(), body.begin(), body.end());
    return ids;
}

std::vector<int> Vocabulary::encode_for_generation(const std::string& text) const {
    std::vector<int> ids = {kBos};
    auto body = encode_words(text);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(kEos);
    return ids;
}

} // namespace ipga

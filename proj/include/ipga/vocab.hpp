#pragma once

#include <string>
#include <vector>

namespace ipga {

// Word-level closed vocabulary over the synthetic scene language.
// Token ids are dense 0..size-1; the four special tokens are fixed at the
// front so serialized bundles stay readable.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    static Vocabulary standard();

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const;
    int id(const std::string& word) const;       // throws on unknown word
    bool contains(const std::string& word) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    // Whitespace-separated words -> ids (no specials added).
    std::vector<int> encode_words(const std::string& text) const;
    std::string decode(const std::vector<int>& ids, bool skip_special = true) const;

    // [CLS] w1 .. wn  (text-encoder input)
    std::vector<int> encode_for_encoder(const std::string& text) const;
    // [BOS] w1 .. wn [EOS]  (generation target)
    std::vector<int> encode_for_generation(const std::string& text) const;

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
};

} // namespace ipga

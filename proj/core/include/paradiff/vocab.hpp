#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace paradiff {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kReservedCount = 4;

// Integer token ids. Unpadded unless a function says otherwise.
struct TokenSequence {
    std::vector<int> ids;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Toy vocabulary layout:
//   [0, 4)                reserved <pad> <unk> </s> ,
//   content block         classes x synonyms, named w{class}{a,b,c...}
//   marker block          styles x markers_per_style, named {A,B,...}{index}
class Vocabulary {
public:
    Vocabulary(int content_classes, int synonyms, int styles, int markers_per_style);

    int size() const { return size_; }
    int content_classes() const { return content_classes_; }
    int synonyms() const { return synonyms_; }
    int styles() const { return styles_; }
    int markers_per_style() const { return markers_per_style_; }

    int content_id(int cls, int synonym) const;
    int marker_id(int style, int index) const;
    // Class of a content token, or -1.
    int content_class(int id) const;
    int synonym_index(int id) const;
    // Style of a marker token, or -1.
    int marker_style(int id) const;
    bool is_content(int id) const { return content_class(id) >= 0; }
    bool is_marker(int id) const { return marker_style(id) >= 0; }

    std::string name(int id) const;
    int id(std::string_view name) const;  // unknown names map to <unk>

    std::vector<int> encode(std::string_view text) const;  // whitespace-separated names
    std::string decode(const std::vector<int>& ids) const;

    friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

private:
    int content_classes_;
    int synonyms_;
    int styles_;
    int markers_per_style_;
    int content_begin_;
    int marker_begin_;
    int size_;
};

// Ids with the trailing end-of-sequence marker and pad suffix removed: the
// tokens before the first </s> or <pad>.
TokenSequence strip_padding(const std::vector<int>& ids);

// Appends </s> and pads to `length`. Throws ContractError if it does not fit.
std::vector<int> to_model_input(const TokenSequence& text, int length, bool append_eos);

}  // namespace paradiff

#include "paradiff/vocab.hpp"

#include "paradiff/errors.hpp"

#include <sstream>

namespace paradiff {

Vocabulary::Vocabulary(int content_classes, int synonyms, int styles, int markers_per_style)
    : content_classes_(content_classes),
      synonyms_(synonyms),
      styles_(styles),
      markers_per_style_(markers_per_style) {
    if (content_classes < 1 || synonyms < 1 || styles < 1 || markers_per_style < 1) {
        throw ContractError("vocabulary: all block sizes must be positive");
    }
    if (synonyms > 26) throw ContractError("vocabulary: at most 26 synonyms per class");
    if (styles > 26) throw ContractError("vocabulary: at most 26 styles");
    content_begin_ = kReservedCount;
    marker_begin_ = content_begin_ + content_classes * synonyms;
    size_ = marker_begin_ + styles * markers_per_style;
}

int Vocabulary::content_id(int cls, int synonym) const {
    if (cls < 0 || cls >= content_classes_ || synonym < 0 || synonym >= synonyms_) {
        throw DomainError("vocabulary: content token out of range");
    }
    return content_begin_ + cls * synonyms_ + synonym;
}

int Vocabulary::marker_id(int style, int index) const {
    if (style < 0 || style >= styles_ || index < 0 || index >= markers_per_style_) {
        throw DomainError("vocabulary: marker out of range");
    }
    return marker_begin_ + style * markers_per_style_ + index;
}

int Vocabulary::content_class(int id) const {
    if (id < content_begin_ || id >= marker_begin_) return -1;
    return (id - content_begin_) / synonyms_;
}

int Vocabulary::synonym_index(int id) const {
    if (id < content_begin_ || id >= marker_begin_) return -1;
    return (id - content_begin_) % synonyms_;
}

int Vocabulary::marker_style(int id) const {
    if (id < marker_begin_ || id >= size_) return -1;
    return (id - marker_begin_) / markers_per_style_;
}

std::string Vocabulary::name(int id) const {
    switch (id) {
        case kPadId: return "<pad>";
        case kUnkId: return "<unk>";
        case kEosId: return "</s>";
        case kSepId: return ",";
        default: break;
    }
    if (const int c = content_class(id); c >= 0) {
        return "w" + std::to_string(c) + static_cast<char>('a' + synonym_index(id));
    }
    if (const int s = marker_style(id); s >= 0) {
        return std::string(1, static_cast<char>('A' + s)) + std::to_string((id - marker_begin_) % markers_per_style_);
    }
    return "<unk>";
}

int Vocabulary::id(std::string_view name) const {
    if (name == "<pad>") return kPadId;
    if (name == "</s>") return kEosId;
    if (name == ",") return kSepId;
    auto parse_int = [](std::string_view digits, int& out) {
        if (digits.empty()) return false;
        int v = 0;
        for (char ch : digits) {
            if (ch < '0' || ch > '9') return false;
            v = v * 10 + (ch - '0');
        }
        out = v;
        return true;
    };
    if (name.size() >= 3 && name.front() == 'w') {
        const char syn = name.back();
        int cls = 0;
        if (syn >= 'a' && syn - 'a' < synonyms_ && parse_int(name.substr(1, name.size() - 2), cls) &&
            cls < content_classes_) {
            return content_id(cls, syn - 'a');
        }
    }
    if (name.size() >= 2 && name.front() >= 'A' && name.front() - 'A' < styles_) {
        int idx = 0;
        if (parse_int(name.substr(1), idx) && idx < markers_per_style_) return marker_id(name.front() - 'A', idx);
    }
    return kUnkId;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back(id(tok));
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += name(ids[i]);
    }
    return out;
}

TokenSequence strip_padding(const std::vector<int>& ids) {
    TokenSequence out;
    for (int id : ids) {
        if (id == kEosId || id == kPadId) break;
        out.ids.push_back(id);
    }
    return out;
}

std::vector<int> to_model_input(const TokenSequence& text, int length, bool append_eos) {
    const std::size_t needed = text.size() + (append_eos ? 1 : 0);
    if (needed > static_cast<std::size_t>(length)) {
        throw ContractError("sequence of " + std::to_string(needed) + " tokens exceeds length " +
                            std::to_string(length));
    }
    std::vector<int> out(text.ids);
    if (append_eos) out.push_back(kEosId);
    out.resize(static_cast<std::size_t>(length), kPadId);
    return out;
}

}  // namespace paradiff

#ifndef JAT_TOKENIZER_HPP_
#define JAT_TOKENIZER_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace jat {

// ---------------------------------------------------------------------------
// unicode helpers (enough of the category tables for byte-level BPE:
// ASCII is exact, the common non-ASCII script ranges are classified as
// letters, and everything unknown falls through to the punctuation bucket)
// ---------------------------------------------------------------------------
namespace uni {

struct Codepoint {
    uint32_t value;
    int length;  // bytes consumed
};

inline Codepoint decode_utf8(const std::string& s, size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    auto cont = [&](size_t k) -> uint32_t {
        if (pos + k >= s.size()) return 0xFFFFFFFF;
        const auto b = static_cast<unsigned char>(s[pos + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3Fu) : 0xFFFFFFFF;
    };
    if ((b0 & 0xE0) == 0xC0) {
        const uint32_t c1 = cont(1);
        if (c1 != 0xFFFFFFFF) return {((b0 & 0x1Fu) << 6) | c1, 2};
    } else if ((b0 & 0xF0) == 0xE0) {
        const uint32_t c1 = cont(1), c2 = cont(2);
        if (c1 != 0xFFFFFFFF && c2 != 0xFFFFFFFF) return {((b0 & 0x0Fu) << 12) | (c1 << 6) | c2, 3};
    } else if ((b0 & 0xF8) == 0xF0) {
        const uint32_t c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 != 0xFFFFFFFF && c2 != 0xFFFFFFFF && c3 != 0xFFFFFFFF) {
            return {((b0 & 0x07u) << 18) | (c1 << 12) | (c2 << 6) | c3, 4};
        }
    }
    // invalid sequence: treat the byte as a lone unit
    return {b0, 1};
}

inline void append_utf8(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline bool is_space(uint32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case 0x0B: case 0x0C:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_digit(uint32_t cp) {
    if (cp >= '0' && cp <= '9') return true;
    if (cp >= 0x0660 && cp <= 0x0669) return true;  // Arabic-Indic
    if (cp >= 0x06F0 && cp <= 0x06F9) return true;
    if (cp >= 0x0966 && cp <= 0x096F) return true;  // Devanagari
    if (cp >= 0xFF10 && cp <= 0xFF19) return true;  // fullwidth
    return false;
}

inline bool is_letter(uint32_t cp) {
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return true;
    if (cp < 0x80) return false;
    if (is_space(cp) || is_digit(cp)) return false;
    // Latin-1 letters minus punctuation/symbols
    if (cp >= 0xC0 && cp <= 0xFF && cp != 0xD7 && cp != 0xF7) return true;
    if (cp == 0xAA || cp == 0xB5 || cp == 0xBA) return true;
    if (cp >= 0x100 && cp <= 0x2AF) return true;   // Latin extended
    if (cp >= 0x370 && cp <= 0x3FF && cp != 0x37E) return true;  // Greek
    if (cp >= 0x400 && cp <= 0x52F) return true;   // Cyrillic
    if (cp >= 0x531 && cp <= 0x58F) return true;   // Armenian
    if (cp >= 0x5D0 && cp <= 0x5EA) return true;   // Hebrew
    if (cp >= 0x620 && cp <= 0x64A) return true;   // Arabic
    if (cp >= 0x905 && cp <= 0x939) return true;   // Devanagari
    if (cp >= 0x3041 && cp <= 0x30FF) return true; // kana
    if (cp >= 0x4E00 && cp <= 0x9FFF) return true; // CJK unified
    if (cp >= 0xAC00 && cp <= 0xD7A3) return true; // Hangul
    return false;
}

}  // namespace uni

// GPT-2 byte alphabet: every byte maps to a printable codepoint, printable
// ASCII and most of Latin-1 to themselves, the rest shifted above 0x100.
inline const std::vector<std::string>& byte_alphabet() {
    static const std::vector<std::string> table = [] {
        std::vector<int> bs;
        for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
        for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
        for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
        std::vector<int> cp_of_byte(256, -1);
        for (int b : bs) cp_of_byte[static_cast<size_t>(b)] = b;
        int n = 0;
        for (int b = 0; b < 256; ++b) {
            if (cp_of_byte[static_cast<size_t>(b)] < 0) cp_of_byte[static_cast<size_t>(b)] = 256 + n++;
        }
        std::vector<std::string> out(256);
        for (int b = 0; b < 256; ++b) uni::append_utf8(out[static_cast<size_t>(b)], static_cast<uint32_t>(cp_of_byte[static_cast<size_t>(b)]));
        return out;
    }();
    return table;
}

inline const std::unordered_map<uint32_t, uint8_t>& byte_alphabet_inverse() {
    static const std::unordered_map<uint32_t, uint8_t> inv = [] {
        std::unordered_map<uint32_t, uint8_t> m;
        const auto& fwd = byte_alphabet();
        for (int b = 0; b < 256; ++b) {
            m[uni::decode_utf8(fwd[static_cast<size_t>(b)], 0).value] = static_cast<uint8_t>(b);
        }
        return m;
    }();
    return inv;
}

// The GPT-2 pre-tokenization split:
//   contractions ('s 't 're 've 'm 'll 'd), optionally-space-prefixed letter
//   runs, digit runs and punctuation runs, and whitespace runs where the last
//   whitespace before a visible character is given to the next piece.
inline std::vector<std::string> pretokenize(const std::string& text) {
    // decode once into codepoints with byte offsets
    std::vector<uint32_t> cps;
    std::vector<size_t> offsets;
    for (size_t pos = 0; pos < text.size();) {
        const auto c = uni::decode_utf8(text, pos);
        cps.push_back(c.value);
        offsets.push_back(pos);
        pos += static_cast<size_t>(c.length);
    }
    offsets.push_back(text.size());
    const size_t n = cps.size();

    std::vector<std::string> pieces;
    auto emit = [&](size_t from, size_t to) {
        pieces.emplace_back(text.substr(offsets[from], offsets[to] - offsets[from]));
    };

    size_t i = 0;
    while (i < n) {
        // contractions, lowercase only like the reference pattern
        if (cps[i] == '\'' && i + 1 < n) {
            const uint32_t c1 = cps[i + 1];
            if (c1 == 's' || c1 == 't' || c1 == 'm' || c1 == 'd') {
                emit(i, i + 2);
                i += 2;
                continue;
            }
            if (i + 2 < n) {
                const uint32_t c2 = cps[i + 2];
                if ((c1 == 'r' && c2 == 'e') || (c1 == 'v' && c2 == 'e') || (c1 == 'l' && c2 == 'l')) {
                    emit(i, i + 3);
                    i += 3;
                    continue;
                }
            }
        }
        const size_t start = i;
        size_t j = cps[i] == ' ' ? i + 1 : i;
        if (j < n && uni::is_letter(cps[j])) {
            while (j < n && uni::is_letter(cps[j])) ++j;
            emit(start, j);
            i = j;
            continue;
        }
        if (j < n && uni::is_digit(cps[j])) {
            while (j < n && uni::is_digit(cps[j])) ++j;
            emit(start, j);
            i = j;
            continue;
        }
        if (j < n && !uni::is_space(cps[j])) {
            while (j < n && !uni::is_space(cps[j]) && !uni::is_letter(cps[j]) && !uni::is_digit(cps[j])) ++j;
            emit(start, j);
            i = j;
            continue;
        }
        // whitespace run; the final whitespace before a visible character
        // belongs to the following piece
        j = i;
        while (j < n && uni::is_space(cps[j])) ++j;
        if (j < n && j - i > 1) {
            emit(i, j - 1);
            i = j - 1;
        } else {
            emit(i, j);
            i = j;
        }
    }
    return pieces;
}

// ---------------------------------------------------------------------------
// Byte-pair-encoding tokenizer over the GPT-2 file formats: a token-to-id
// JSON map plus a merges file with one ranked space-separated pair per line.
// Immutable after load; encode/decode are mutual inverses on any text the
// vocabulary's alphabet covers (always, with the standard 256 byte tokens).
// ---------------------------------------------------------------------------
class BpeTokenizer {
public:
    static BpeTokenizer load(const std::string& vocab_file, const std::string& merges_file) {
        BpeTokenizer t;
        std::ifstream vf(vocab_file);
        if (!vf) throw std::runtime_error("tokenizer: cannot open vocab file " + vocab_file);
        nlohmann::json j;
        try {
            vf >> j;
        } catch (const std::exception& e) {
            throw std::runtime_error("tokenizer: malformed vocab json in " + vocab_file + ": " + e.what());
        }
        if (!j.is_object()) throw std::runtime_error("tokenizer: vocab file must hold one token-to-id object");
        int max_id = -1;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& token = it.key();
            if (!it.value().is_number_integer()) {
                throw std::runtime_error("tokenizer: non-integer id for token '" + token + "'");
            }
            const int id = it.value().get<int>();
            if (id < 0) throw std::runtime_error("tokenizer: negative id for token '" + token + "'");
            if (!t.token_to_id_.emplace(token, id).second) {
                throw std::runtime_error("tokenizer: duplicate token '" + token + "'");
            }
            max_id = std::max(max_id, id);
        }
        t.id_to_token_.assign(static_cast<size_t>(max_id) + 1, std::string());
        std::vector<uint8_t> seen(static_cast<size_t>(max_id) + 1, 0);
        for (const auto& [token, id] : t.token_to_id_) {
            if (seen[static_cast<size_t>(id)]) throw std::runtime_error("tokenizer: duplicate id " + std::to_string(id));
            seen[static_cast<size_t>(id)] = 1;
            t.id_to_token_[static_cast<size_t>(id)] = token;
        }
        if (static_cast<size_t>(max_id) + 1 != t.token_to_id_.size()) {
            throw std::runtime_error("tokenizer: vocab ids are not contiguous from 0");
        }

        std::ifstream mf(merges_file);
        if (!mf) throw std::runtime_error("tokenizer: cannot open merges file " + merges_file);
        std::string line;
        int line_no = 0;
        int rank = 0;
        while (std::getline(mf, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line_no == 1 && line.rfind("#version", 0) == 0) continue;
            if (line.empty()) continue;
            const size_t sp = line.find(' ');
            if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
                line.find(' ', sp + 1) != std::string::npos) {
                throw std::runtime_error("tokenizer: malformed merge at " + merges_file + ":" +
                                         std::to_string(line_no));
            }
            const std::string left = line.substr(0, sp);
            const std::string right = line.substr(sp + 1);
            if (!t.merge_rank_.emplace(left + '\x01' + right, rank).second) {
                throw std::runtime_error("tokenizer: duplicate merge at " + merges_file + ":" +
                                         std::to_string(line_no));
            }
            ++rank;
        }
        return t;
    }

    size_t vocab_size() const { return token_to_id_.size(); }

    // id of <|endoftext|> when present, else -1
    int end_of_text_id() const {
        const auto it = token_to_id_.find("<|endoftext|>");
        return it == token_to_id_.end() ? -1 : it->second;
    }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out;
        for (const auto& piece : pretokenize(text)) {
            // map raw bytes into the byte alphabet
            std::vector<std::string> symbols;
            symbols.reserve(piece.size());
            for (const unsigned char b : piece) symbols.push_back(byte_alphabet()[b]);
            apply_merges(symbols);
            for (const auto& s : symbols) {
                const auto it = token_to_id_.find(s);
                if (it == token_to_id_.end()) {
                    throw std::runtime_error("tokenizer: symbol '" + s + "' missing from vocabulary");
                }
                out.push_back(it->second);
            }
        }
        return out;
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string alphabet_text;
        for (const int id : ids) {
            if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size()) {
                throw std::out_of_range("tokenizer: id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(id_to_token_.size()));
            }
            alphabet_text += id_to_token_[static_cast<size_t>(id)];
        }
        std::string out;
        const auto& inv = byte_alphabet_inverse();
        for (size_t pos = 0; pos < alphabet_text.size();) {
            const auto c = uni::decode_utf8(alphabet_text, pos);
            const auto it = inv.find(c.value);
            if (it == inv.end()) {
                // tokens outside the byte alphabet (specials) pass through
                out.append(alphabet_text, pos, static_cast<size_t>(c.length));
            } else {
                out.push_back(static_cast<char>(it->second));
            }
            pos += static_cast<size_t>(c.length);
        }
        return out;
    }

    bool has_merge(const std::string& a, const std::string& b) const {
        return merge_rank_.count(a + '\x01' + b) > 0;
    }

private:
    // repeatedly apply the lowest-ranked applicable merge
    void apply_merges(std::vector<std::string>& symbols) const {
        while (symbols.size() >= 2) {
            int best_rank = std::numeric_limits<int>::max();
            size_t best = 0;
            for (size_t i = 0; i + 1 < symbols.size(); ++i) {
                const auto it = merge_rank_.find(symbols[i] + '\x01' + symbols[i + 1]);
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best = i;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            const std::string left = symbols[best];
            const std::string right = symbols[best + 1];
            // merge every occurrence of the winning pair, left to right
            std::vector<std::string> next;
            next.reserve(symbols.size());
            for (size_t i = 0; i < symbols.size();) {
                if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
                    next.push_back(left + right);
                    i += 2;
                } else {
                    next.push_back(symbols[i]);
                    ++i;
                }
            }
            symbols.swap(next);
        }
    }

    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> merge_rank_;
};

}  // namespace jat

#endif  // JAT_TOKENIZER_HPP_

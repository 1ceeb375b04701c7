// Generates tokenizer files in the GPT-2 vocab.json/merges.txt format.
//
//   --style full : 50,257 tokens (256 byte tokens, 50,000 merges, <|endoftext|>)
//                  with a deterministic merge list, used where the original
//                  files are not available to the build
//   --style toy  : small vocabulary trained on the bundled caption/mission
//                  grammar, used by the desk-scale training configs
//
// Both outputs load through the same tokenizer code path as the original
// GPT-2 files and can be replaced by them transparently.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "jat/tokenizer.hpp"

namespace {

// byte tokens in the standard enumeration order: printable ranges first,
// then the remapped control bytes
std::vector<std::string> byte_tokens_in_id_order() {
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
    std::set<int> in_bs(bs.begin(), bs.end());
    for (int b = 0; b < 256; ++b) {
        if (!in_bs.count(b)) bs.push_back(b);
    }
    std::vector<std::string> out;
    out.reserve(256);
    for (int b : bs) out.push_back(jat::byte_alphabet()[static_cast<size_t>(b)]);
    return out;
}

void write_files(const std::filesystem::path& dir, const std::vector<std::string>& byte_toks,
                 const std::vector<std::pair<std::string, std::string>>& merges, bool end_of_text) {
    std::filesystem::create_directories(dir);
    nlohmann::json vocab = nlohmann::json::object();
    int id = 0;
    for (const auto& t : byte_toks) vocab[t] = id++;
    for (const auto& [a, b] : merges) {
        const std::string merged = a + b;
        if (vocab.contains(merged)) {
            std::cerr << "make_vocab: merge collision on '" << merged << "'\n";
            std::exit(1);
        }
        vocab[merged] = id++;
    }
    if (end_of_text) vocab["<|endoftext|>"] = id++;

    std::ofstream vf(dir / "vocab.json");
    vf << vocab.dump();
    vf << '\n';

    std::ofstream mf(dir / "merges.txt");
    mf << "#version: 0.2\n";
    for (const auto& [a, b] : merges) mf << a << ' ' << b << '\n';
    std::cout << "wrote " << (dir / "vocab.json").string() << " (" << id << " tokens, " << merges.size()
              << " merges)\n";
}

// ---------------------------------------------------------------------------
// full style: systematic merge enumeration over the visible-ASCII alphabet
// ---------------------------------------------------------------------------
void make_full(const std::filesystem::path& dir) {
    const auto& alpha = jat::byte_alphabet();
    std::vector<std::string> units;  // space plus visible ASCII
    units.push_back(alpha[' ']);
    for (int b = '!'; b <= '~'; ++b) units.push_back(alpha[static_cast<size_t>(b)]);

    std::vector<std::pair<std::string, std::string>> merges;
    std::set<std::string> made;      // "a\x01b" pair keys
    std::set<std::string> produced;  // merged token strings must stay unique
    auto push = [&](const std::string& a, const std::string& b) {
        if (merges.size() >= 50000) return;
        const std::string key = a + '\x01' + b;
        if (made.count(key) || produced.count(a + b)) return;
        made.insert(key);
        produced.insert(a + b);
        merges.emplace_back(a, b);
    };

    // common English bigrams first so ordinary text compresses a little
    const char* seeds[] = {"th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or",
                           "te", "of", "ed", "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha",
                           "as", "ou", "io", "le", "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne",
                           "ea", "ra", "ce", "li", "ch", "ll", "be", "ma", "si", "om", "ur"};
    for (const char* s : seeds) push(std::string(1, s[0]), std::string(1, s[1]));
    for (const char* s : seeds) push(units[0], std::string(1, s[0]) + s[1]);

    // all single-unit pairs
    std::vector<std::pair<std::string, std::string>> level2_order;
    for (const auto& a : units) {
        for (const auto& b : units) {
            level2_order.emplace_back(a, b);
            push(a, b);
        }
    }
    // extend two-character tokens by one unit until the budget is reached
    for (const auto& [a, b] : level2_order) {
        if (merges.size() >= 50000) break;
        for (const auto& c : units) {
            push(a + b, c);
            if (merges.size() >= 50000) break;
        }
    }
    if (merges.size() != 50000) {
        std::cerr << "make_vocab: expected 50000 merges, got " << merges.size() << "\n";
        std::exit(1);
    }
    write_files(dir, byte_tokens_in_id_order(), merges, true);
}

// ---------------------------------------------------------------------------
// toy style: pair-count BPE training on the bundled grammar corpus
// ---------------------------------------------------------------------------
std::vector<std::string> toy_corpus() {
    const std::vector<std::string> colors = {"red",  "green", "blue",  "yellow", "purple", "orange", "cyan",
                                             "pink", "brown", "white", "gray",   "olive",  "teal"};
    const std::vector<std::string> shapes = {"square", "circle"};
    std::vector<std::string> lines;
    for (const auto& c : colors) {
        for (const auto& s : shapes) lines.push_back("a " + c + " " + s);
        lines.push_back("go to the " + c + " cell");
    }
    const char* filler[] = {
        "the agent moves to the goal",
        "the reward is the distance to the target",
        "press left or right to catch the falling block",
        "a small model can learn a simple task",
        "the weather today is sunny and warm",
        "in the future cars will drive themselves",
        "my favorite book is on the table",
    };
    for (const char* f : filler) lines.emplace_back(f);
    return lines;
}

void make_toy(const std::filesystem::path& dir, size_t max_merges) {
    // corpus as byte-alphabet symbol sequences per pre-token
    std::vector<std::vector<std::string>> words;
    for (const auto& line : toy_corpus()) {
        for (const auto& piece : jat::pretokenize(line)) {
            std::vector<std::string> symbols;
            for (const unsigned char b : piece) symbols.push_back(jat::byte_alphabet()[b]);
            // weight grammar pieces by repeating them
            for (int k = 0; k < 4; ++k) words.push_back(symbols);
        }
    }
    std::vector<std::pair<std::string, std::string>> merges;
    while (merges.size() < max_merges) {
        std::map<std::pair<std::string, std::string>, int> counts;  // ordered for tie-breaks
        for (const auto& w : words) {
            for (size_t i = 0; i + 1 < w.size(); ++i) counts[{w[i], w[i + 1]}]++;
        }
        std::pair<std::string, std::string> best;
        int best_count = 1;
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best_count = count;
                best = pair;
            }
        }
        if (best_count <= 1) break;
        merges.push_back(best);
        const std::string merged = best.first + best.second;
        for (auto& w : words) {
            std::vector<std::string> next;
            next.reserve(w.size());
            for (size_t i = 0; i < w.size();) {
                if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
                    next.push_back(merged);
                    i += 2;
                } else {
                    next.push_back(w[i]);
                    ++i;
                }
            }
            w.swap(next);
        }
    }
    write_files(dir, byte_tokens_in_id_order(), merges, true);
}

}  // namespace

int main(int argc, char** argv) {
    std::string style, out;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--style" && i + 1 < argc) {
            style = argv[++i];
        } else if (arg == "--out" && i + 1 < argc) {
            out = argv[++i];
        } else {
            std::cerr << "usage: make_vocab --style full|toy --out DIR\n";
            return 1;
        }
    }
    if (out.empty() || (style != "full" && style != "toy")) {
        std::cerr << "usage: make_vocab --style full|toy --out DIR\n";
        return 1;
    }
    if (style == "full") {
        make_full(out);
    } else {
        make_toy(out, 250);
    }
    return 0;
}

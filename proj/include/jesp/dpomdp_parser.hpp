#pragma once

#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jesp/model.hpp"
#include "jesp/util.hpp"

namespace jesp {

struct ParseError : std::runtime_error {
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

struct ParseDiagnostics {
    std::vector<std::pair<int, std::string>> warnings;  // (line, message)
    int renormalized_rows = 0;
};

namespace parser_detail {

struct Token {
    std::string text;
    int line;
};

inline bool is_keyword(const std::string& t) {
    return t == "agents:" || t == "discount:" || t == "values:" || t == "states:" ||
           t == "actions:" || t == "observations:" || t == "start:" || t == "T:" ||
           t == "O:" || t == "R:";
}

// Splits into tokens. ':' directly after a keyword name fuses with it
// ("discount:"); every other ':' is a separator token of its own.
inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> out;
    int line = 1;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back({cur, line});
            cur.clear();
        }
    };
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '#') {
            flush();
            while (i + 1 < text.size() && text[i + 1] != '\n') ++i;
        } else if (c == '\n') {
            flush();
            ++line;
        } else if (c == '\r' || c == ' ' || c == '\t') {
            flush();
        } else if (c == ':') {
            if (is_keyword(cur + ':')) {
                cur += ':';
                flush();
            } else {
                flush();
                out.push_back({":", line});
            }
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0' && end != s.c_str();
}

inline bool parse_int(const std::string& s, int& out) {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (!end || *end != '\0' || end == s.c_str()) return false;
    out = static_cast<int>(v);
    return true;
}

struct UnknownIdentifier : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// name or numeric index -> index; "*" -> -1
inline int resolve(const std::string& tok, const std::vector<std::string>& labels) {
    if (tok == "*") return -1;
    int idx;
    if (parse_int(tok, idx)) {
        if (idx < 0 || idx >= static_cast<int>(labels.size()))
            throw UnknownIdentifier("index out of range: " + tok);
        return idx;
    }
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == tok) return static_cast<int>(i);
    throw UnknownIdentifier("unknown identifier: " + tok);
}

}  // namespace parser_detail

/// Parser for the standard benchmark text format, covering both the
/// multi-agent form (with an `agents:` directive) and its single-agent
/// sibling. Supports scalar, row and full-matrix blocks, `uniform` and
/// `identity` keywords, `*` wildcards, comments, and names or indices
/// interchangeably. Later entries overwrite earlier ones.
class DpomdpParser {
  public:
    explicit DpomdpParser(std::optional<double> gamma_override = std::nullopt)
        : gamma_override_(gamma_override) {}

    DecPomdp parse(const std::string& text, ParseDiagnostics* diag_out = nullptr) {
        using namespace parser_detail;
        tokens_ = tokenize(text);
        pos_ = 0;
        diag_ = ParseDiagnostics{};
        while (!atEnd()) {
            const Token t = peek();
            if (t.text == "agents:") {
                ++pos_;
                if (!parse_int(next().text, num_agents_) || num_agents_ < 1)
                    throw ParseError(t.line, "agents: needs a positive integer");
            } else if (t.text == "discount:") {
                ++pos_;
                if (!parse_double(next().text, discount_))
                    throw ParseError(t.line, "discount: needs a number");
            } else if (t.text == "values:") {
                ++pos_;
                const std::string v = next().text;
                if (v == "cost")
                    cost_values_ = true;
                else if (v != "reward")
                    throw ParseError(t.line, "values: must be 'reward' or 'cost'");
            } else if (t.text == "states:") {
                ++pos_;
                states_ = readIdList(t.line, "s");
            } else if (t.text == "actions:") {
                ++pos_;
                actions_ = readPerAgentLists(t.line, "a");
            } else if (t.text == "observations:") {
                ++pos_;
                obs_ = readPerAgentLists(t.line, "o");
            } else if (t.text == "start:") {
                requireHeader(t.line, false);
                readStart();
            } else if (t.text == "T:" || t.text == "O:") {
                requireHeader(t.line, true);
                readMatrixStatement(t.text[0]);
            } else if (t.text == "R:") {
                requireHeader(t.line, true);
                readRewardStatement();
            } else {
                throw ParseError(t.line, "unexpected token '" + t.text + "'");
            }
        }
        DecPomdp d = finalize();
        if (diag_out) *diag_out = diag_;
        return d;
    }

  private:
    using Token = parser_detail::Token;

    std::optional<double> gamma_override_;
    std::vector<Token> tokens_;
    size_t pos_ = 0;
    ParseDiagnostics diag_;

    int num_agents_ = 1;
    double discount_ = -1;
    bool cost_values_ = false;
    std::vector<std::string> states_;
    std::vector<std::vector<std::string>> actions_;
    std::vector<std::vector<std::string>> obs_;
    std::optional<Belief> start_;

    bool tables_ready_ = false;
    bool saw_t_ = false, saw_o_ = false;
    std::vector<double> t_table_;  // [ja][s][s']
    std::vector<double> o_table_;  // [ja][s'][o]
    std::vector<double> r_table_;  // [ja][s]
    // refined reward entries (concrete next state / observation), reduced
    // under T and O at finalize; keyed by (ja, s) then (s', jo)
    std::map<std::pair<int, int>, std::map<std::pair<int, int>, double>> r_overlay_;

    long S() const { return static_cast<long>(states_.size()); }
    long JA() const {
        long n = 1;
        for (const auto& a : actions_) n *= static_cast<long>(a.size());
        return n;
    }
    long JO() const {
        long n = 1;
        for (const auto& o : obs_) n *= static_cast<long>(o.size());
        return n;
    }

    bool atEnd() const { return pos_ >= tokens_.size(); }
    int lastLine() const { return tokens_.empty() ? 1 : tokens_.back().line; }
    const Token& peek() const {
        if (pos_ >= tokens_.size())
            throw ParseError(tokens_.empty() ? 1 : tokens_.back().line, "unexpected end of file");
        return tokens_[pos_];
    }
    Token next() {
        Token t = peek();
        ++pos_;
        return t;
    }

    void requireHeader(int line, bool tables) {
        if (states_.empty()) throw ParseError(line, "states: must come first");
        if (tables) {
            if (actions_.size() != static_cast<size_t>(num_agents_))
                throw ParseError(line, "actions: must be declared before matrices");
            if (obs_.size() != static_cast<size_t>(num_agents_))
                throw ParseError(line, "observations: must be declared before matrices");
            if (!tables_ready_) {
                t_table_.assign(JA() * S() * S(), 0.0);
                o_table_.assign(JA() * S() * JO(), 0.0);
                r_table_.assign(JA() * S(), 0.0);
                tables_ready_ = true;
            }
        }
    }

    std::vector<Token> collectValues(const char* ctx) {
        std::vector<Token> out;
        while (!atEnd() && !parser_detail::is_keyword(peek().text)) {
            if (peek().text == ":")
                throw ParseError(peek().line, std::string("unexpected ':' in ") + ctx);
            out.push_back(next());
        }
        return out;
    }

    // ------------------------------------------------------------- header
    std::vector<std::string> readIdList(int line, const char* prefix) {
        using namespace parser_detail;
        std::vector<Token> toks = collectValues("identifier list");
        if (toks.empty()) throw ParseError(line, "empty identifier list");
        int count;
        if (toks.size() == 1 && parse_int(toks[0].text, count)) {
            if (count < 1) throw ParseError(line, "count must be positive");
            std::vector<std::string> out;
            out.reserve(count);
            for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
            return out;
        }
        std::vector<std::string> out;
        out.reserve(toks.size());
        for (auto& t : toks) out.push_back(std::move(t.text));
        return out;
    }

    // One list per agent; a list is the run of tokens sharing a source line.
    std::vector<std::vector<std::string>> readPerAgentLists(int line, const char* prefix) {
        using namespace parser_detail;
        std::vector<Token> toks = collectValues("per-agent lists");
        std::vector<std::vector<Token>> groups;
        for (auto& t : toks) {
            if (groups.empty() || groups.back().back().line != t.line) groups.push_back({});
            groups.back().push_back(t);
        }
        if (groups.size() != static_cast<size_t>(num_agents_))
            throw ParseError(line, "expected " + std::to_string(num_agents_) +
                                       " per-agent lists, got " + std::to_string(groups.size()));
        std::vector<std::vector<std::string>> out;
        for (size_t i = 0; i < groups.size(); ++i) {
            int count;
            if (groups[i].size() == 1 && parse_int(groups[i][0].text, count)) {
                if (count < 1) throw ParseError(groups[i][0].line, "count must be positive");
                std::vector<std::string> lst;
                for (int k = 0; k < count; ++k)
                    lst.push_back(prefix + std::to_string(i) + "_" + std::to_string(k));
                out.push_back(std::move(lst));
            } else {
                std::vector<std::string> lst;
                for (auto& t : groups[i]) lst.push_back(std::move(t.text));
                out.push_back(std::move(lst));
            }
        }
        return out;
    }

    // ------------------------------------------------------------- start
    void readStart() {
        using namespace parser_detail;
        const int line = next().line;  // consume 'start:'
        std::vector<Token> toks = collectValues("start:");
        if (toks.empty()) throw ParseError(line, "empty start distribution");
        if (toks.size() == 1 && toks[0].text == "uniform") {
            start_ = Belief::uniform(static_cast<int>(S()));
            return;
        }
        if (static_cast<long>(toks.size()) == S()) {
            Belief b;
            bool all_num = true;
            double sum = 0;
            for (long s = 0; s < S() && all_num; ++s) {
                double p;
                if (!parse_double(toks[s].text, p))
                    all_num = false;
                else {
                    if (p < 0) throw ParseError(toks[s].line, "negative start probability");
                    if (p > 0) b.probs.emplace_back(static_cast<int>(s), p);
                    sum += p;
                }
            }
            if (all_num && sum > 0) {
                if (std::abs(sum - 1.0) > kRenormTolerance)
                    throw ParseError(line, "start distribution sums to " + format_double(sum));
                if (std::abs(sum - 1.0) > kRowSumTolerance) {
                    noteRenormalized(line);
                    b.normalize();
                }
                start_ = std::move(b);
                return;
            }
        }
        if (toks.size() == 1) {
            try {
                start_ = Belief::point_mass(resolve(toks[0].text, states_));
                return;
            } catch (const UnknownIdentifier& e) {
                throw ParseError(toks[0].line, e.what());
            }
        }
        throw ParseError(line, "malformed start distribution");
    }

    // ------------------------------------------------- entity scanning
    // After a ':' the next token is an entity only if it sits on the same
    // line as that ':'; a line break there means matrix/row values follow
    // (the trailing-colon style). 'uniform'/'identity' are never entities.
    bool entityFollows(int colon_line) const {
        if (atEnd()) return false;
        const Token& t = peek();
        if (parser_detail::is_keyword(t.text) || t.text == ":") return false;
        if (t.text == "uniform" || t.text == "identity") return false;
        return t.line == colon_line;
    }

    // Either a single '*' or one token per agent; -1 marks a wildcard slot.
    std::vector<int> readJointEntity(const std::vector<std::vector<std::string>>& alphabets,
                                     const char* ctx) {
        using namespace parser_detail;
        const Token first = next();
        std::vector<int> pat(num_agents_, -1);
        if (first.text == "*") return pat;
        try {
            pat[0] = resolve(first.text, alphabets[0]);
            for (int i = 1; i < num_agents_; ++i) {
                if (atEnd() || peek().text == ":" || peek().line != first.line)
                    throw ParseError(first.line,
                                     std::string("expected one token per agent in ") + ctx);
                pat[i] = resolve(next().text, alphabets[i]);
            }
        } catch (const UnknownIdentifier& e) {
            throw ParseError(first.line, e.what());
        }
        return pat;
    }

    int readStateEntity(const char* ctx) {
        using namespace parser_detail;
        const Token t = next();
        try {
            return resolve(t.text, states_);
        } catch (const UnknownIdentifier& e) {
            throw ParseError(t.line, std::string(e.what()) + " in " + ctx);
        }
    }

    void forEachJoint(const std::vector<int>& pat,
                      const std::vector<std::vector<std::string>>& alphabets,
                      const std::function<void(int)>& fn) const {
        std::function<void(int, long)> rec = [&](int agent, long acc) {
            if (agent == num_agents_) {
                fn(static_cast<int>(acc));
                return;
            }
            const int n = static_cast<int>(alphabets[agent].size());
            if (pat[agent] >= 0)
                rec(agent + 1, acc * n + pat[agent]);
            else
                for (int k = 0; k < n; ++k) rec(agent + 1, acc * n + k);
        };
        rec(0, 0);
    }

    std::vector<long> expandState(int pat) const {
        std::vector<long> out;
        if (pat >= 0) {
            out.push_back(pat);
        } else {
            out.reserve(S());
            for (long s = 0; s < S(); ++s) out.push_back(s);
        }
        return out;
    }

    std::vector<double> parseNumbers(const std::vector<Token>& toks, const char* ctx) {
        using namespace parser_detail;
        std::vector<double> out;
        out.reserve(toks.size());
        for (const auto& t : toks) {
            double v;
            if (!parse_double(t.text, v))
                throw ParseError(t.line, std::string("expected a number in ") + ctx +
                                             ", got '" + t.text + "'");
            out.push_back(v);
        }
        return out;
    }

    // ------------------------------------------------- T and O statements
    void readMatrixStatement(char kind) {
        using namespace parser_detail;
        const Token head = next();  // 'T:' or 'O:'
        (kind == 'T' ? saw_t_ : saw_o_) = true;
        const long cols = (kind == 'T') ? S() : JO();
        std::vector<int> ja = readJointEntity(actions_, "joint action");

        bool have_from = false, have_to = false;
        int from = -1, to_state = -1;
        std::vector<int> to_obs;
        if (!atEnd() && peek().text == ":") {
            const int cl = next().line;
            if (entityFollows(cl)) {
                from = readStateEntity(kind == 'T' ? "T source state" : "O next state");
                have_from = true;
                if (!atEnd() && peek().text == ":") {
                    const int cl2 = next().line;
                    if (entityFollows(cl2)) {
                        if (kind == 'T')
                            to_state = readStateEntity("T target state");
                        else
                            to_obs = readJointEntity(obs_, "joint observation");
                        have_to = true;
                        if (!atEnd() && peek().text == ":") ++pos_;  // optional, before value
                    }
                }
            }
        }
        std::vector<Token> vals = collectValues(kind == 'T' ? "T:" : "O:");

        auto writeCell = [&](int jaIdx, long row, long col, double v) {
            if (kind == 'T')
                t_table_[(static_cast<long>(jaIdx) * S() + row) * S() + col] = v;
            else
                o_table_[(static_cast<long>(jaIdx) * S() + row) * JO() + col] = v;
        };

        if (have_to) {
            if (vals.size() != 1)
                throw ParseError(head.line, "expected exactly one probability");
            const double v = parseNumbers(vals, "probability")[0];
            forEachJoint(ja, actions_, [&](int jaIdx) {
                for (long r : expandState(from)) {
                    if (kind == 'T')
                        for (long c : expandState(to_state)) writeCell(jaIdx, r, c, v);
                    else
                        forEachJoint(to_obs, obs_,
                                     [&](int jo) { writeCell(jaIdx, r, jo, v); });
                }
            });
        } else if (have_from) {
            if (vals.size() == 1 && vals[0].text == "uniform") {
                forEachJoint(ja, actions_, [&](int jaIdx) {
                    for (long r : expandState(from))
                        for (long c = 0; c < cols; ++c) writeCell(jaIdx, r, c, 1.0 / cols);
                });
            } else {
                if (static_cast<long>(vals.size()) != cols)
                    throw ParseError(head.line,
                                     "row needs " + std::to_string(cols) + " entries, got " +
                                         std::to_string(vals.size()));
                auto nums = parseNumbers(vals, "row");
                forEachJoint(ja, actions_, [&](int jaIdx) {
                    for (long r : expandState(from))
                        for (long c = 0; c < cols; ++c) writeCell(jaIdx, r, c, nums[c]);
                });
            }
        } else {
            if (vals.size() == 1 && (vals[0].text == "uniform" || vals[0].text == "identity")) {
                const bool ident = vals[0].text == "identity";
                if (ident && kind == 'O')
                    throw ParseError(head.line, "identity is not meaningful for O:");
                forEachJoint(ja, actions_, [&](int jaIdx) {
                    for (long r = 0; r < S(); ++r)
                        for (long c = 0; c < cols; ++c)
                            writeCell(jaIdx, r, c, ident ? (r == c ? 1.0 : 0.0) : 1.0 / cols);
                });
            } else {
                if (static_cast<long>(vals.size()) != S() * cols)
                    throw ParseError(head.line, "matrix needs " + std::to_string(S() * cols) +
                                                    " entries, got " +
                                                    std::to_string(vals.size()));
                auto nums = parseNumbers(vals, "matrix");
                forEachJoint(ja, actions_, [&](int jaIdx) {
                    for (long r = 0; r < S(); ++r)
                        for (long c = 0; c < cols; ++c)
                            writeCell(jaIdx, r, c, nums[r * cols + c]);
                });
            }
        }
    }

    // ------------------------------------------------------------ rewards
    void readRewardStatement() {
        using namespace parser_detail;
        const Token head = next();  // 'R:'
        std::vector<int> ja = readJointEntity(actions_, "joint action");
        if (atEnd() || peek().text != ":")
            throw ParseError(head.line, "expected ':' before the state in R:");
        ++pos_;
        const int s = readStateEntity("R source state");

        bool have_sp = false, have_obs = false;
        int sp = -1;
        std::vector<int> o_pat(num_agents_, -1);
        if (!atEnd() && peek().text == ":") {
            const int cl = next().line;
            if (entityFollows(cl)) {
                sp = readStateEntity("R target state");
                have_sp = true;
                if (!atEnd() && peek().text == ":") {
                    const int cl2 = next().line;
                    if (entityFollows(cl2)) {
                        o_pat = readJointEntity(obs_, "joint observation");
                        have_obs = true;
                        if (!atEnd() && peek().text == ":") ++pos_;
                    }
                }
            }
        }
        std::vector<Token> vals = collectValues("R:");
        if (vals.empty()) throw ParseError(head.line, "missing reward value");

        if (have_obs || (have_sp && vals.size() == 1)) {
            const double v = parseNumbers(vals, "reward")[0];
            if (vals.size() != 1) throw ParseError(head.line, "expected one reward value");
            applyReward(ja, s, have_sp ? sp : -1, have_sp && !have_obs
                                                      ? std::vector<int>(num_agents_, -1)
                                                      : o_pat,
                        !have_sp, v);
        } else if (have_sp) {
            if (static_cast<long>(vals.size()) != JO())
                throw ParseError(head.line,
                                 "reward row needs " + std::to_string(JO()) + " entries");
            auto nums = parseNumbers(vals, "reward row");
            for (long jo = 0; jo < JO(); ++jo)
                applyRewardCell(ja, s, sp, static_cast<int>(jo), nums[jo]);
        } else if (vals.size() == 1) {
            // R: <ja> : <s> : <value> with the reward independent of s', o
            applyReward(ja, s, -1, std::vector<int>(num_agents_, -1), true,
                        parseNumbers(vals, "reward")[0]);
        } else {
            if (static_cast<long>(vals.size()) != S() * JO())
                throw ParseError(head.line, "reward matrix needs " +
                                                std::to_string(S() * JO()) + " entries");
            auto nums = parseNumbers(vals, "reward matrix");
            for (long spi = 0; spi < S(); ++spi)
                for (long jo = 0; jo < JO(); ++jo)
                    applyRewardCell(ja, s, static_cast<int>(spi), static_cast<int>(jo),
                                    nums[spi * JO() + jo]);
        }
    }

    // coarse = the value does not depend on s' or o: write-through to R(s,a)
    void applyReward(const std::vector<int>& ja_pat, int s_pat, int sp_pat,
                     const std::vector<int>& o_pat, bool coarse_hint, double v) {
        bool o_wild = true;
        for (int c : o_pat) o_wild = o_wild && (c < 0);
        const bool coarse = coarse_hint || (sp_pat < 0 && o_wild);
        forEachJoint(ja_pat, actions_, [&](int jaIdx) {
            for (long s : expandState(s_pat)) {
                const auto key = std::make_pair(jaIdx, static_cast<int>(s));
                if (coarse) {
                    r_table_[jaIdx * S() + s] = v;
                    r_overlay_.erase(key);  // later coarse entries override refined ones
                } else {
                    for (long spi : expandState(sp_pat)) {
                        if (o_wild) {
                            for (long jo = 0; jo < JO(); ++jo)
                                r_overlay_[key][{static_cast<int>(spi), static_cast<int>(jo)}] =
                                    v;
                        } else {
                            forEachJoint(o_pat, obs_, [&](int jo) {
                                r_overlay_[key][{static_cast<int>(spi), jo}] = v;
                            });
                        }
                    }
                }
            }
        });
    }

    void applyRewardCell(const std::vector<int>& ja_pat, int s_pat, int sp, int jo, double v) {
        forEachJoint(ja_pat, actions_, [&](int jaIdx) {
            for (long s : expandState(s_pat))
                r_overlay_[{jaIdx, static_cast<int>(s)}][{sp, jo}] = v;
        });
    }

    // ----------------------------------------------------------- finalize
    void noteRenormalized(int line) {
        ++diag_.renormalized_rows;
        diag_.warnings.emplace_back(line, "distribution renormalized");
    }

    SparseRow sparsifyRow(const double* begin, long n, const std::string& what) {
        double sum = 0;
        for (long i = 0; i < n; ++i) {
            if (begin[i] < 0) throw ParseError(0, what + ": negative probability");
            sum += begin[i];
        }
        if (std::abs(sum - 1.0) > kRenormTolerance)
            throw ParseError(0, what + ": row sums to " + format_double(sum));
        const bool renorm = std::abs(sum - 1.0) > kRowSumTolerance;
        if (renorm) noteRenormalized(0);
        SparseRow row;
        for (long i = 0; i < n; ++i)
            if (begin[i] > 0) row.emplace_back(static_cast<int>(i), renorm ? begin[i] / sum
                                                                           : begin[i]);
        return row;
    }

    DecPomdp finalize() {
        if (states_.empty()) throw ParseError(lastLine(), "missing states:");
        if (actions_.size() != static_cast<size_t>(num_agents_))
            throw ParseError(lastLine(), "missing actions:");
        if (obs_.size() != static_cast<size_t>(num_agents_))
            throw ParseError(lastLine(), "missing observations:");
        if (discount_ <= 0) throw ParseError(lastLine(), "missing discount:");
        if (!tables_ready_) {
            t_table_.assign(JA() * S() * S(), 0.0);
            o_table_.assign(JA() * S() * JO(), 0.0);
            r_table_.assign(JA() * S(), 0.0);
            tables_ready_ = true;
        }
        // degenerate single-cell tables may be left implicit
        if (!saw_t_ && S() == 1)
            for (double& v : t_table_) v = 1.0;
        if (!saw_o_ && JO() == 1)
            for (double& v : o_table_) v = 1.0;

        DecPomdp d;
        d.num_agents = num_agents_;
        d.state_labels = states_;
        d.action_labels = actions_;
        d.obs_labels = obs_;
        std::vector<int> asz, osz;
        for (auto& a : actions_) asz.push_back(static_cast<int>(a.size()));
        for (auto& o : obs_) osz.push_back(static_cast<int>(o.size()));
        d.action_indexer = JointIndexer(asz);
        d.obs_indexer = JointIndexer(osz);
        d.discount = gamma_override_.value_or(discount_);
        d.initial_belief = start_.value_or(Belief::uniform(static_cast<int>(S())));

        d.transition.reserve(JA() * S());
        d.observation.reserve(JA() * S());
        for (long ja = 0; ja < JA(); ++ja)
            for (long s = 0; s < S(); ++s)
                d.transition.push_back(sparsifyRow(
                    &t_table_[(ja * S() + s) * S()], S(),
                    "T row (joint action " + std::to_string(ja) + ", state " +
                        std::to_string(s) + ")"));
        for (long ja = 0; ja < JA(); ++ja)
            for (long sp = 0; sp < S(); ++sp)
                d.observation.push_back(sparsifyRow(
                    &o_table_[(ja * S() + sp) * JO()], JO(),
                    "O row (joint action " + std::to_string(ja) + ", state " +
                        std::to_string(sp) + ")"));

        d.reward = r_table_;
        for (const auto& [key, cells] : r_overlay_) {
            const auto [ja, s] = key;
            const double base = r_table_[ja * S() + s];
            double acc = 0;
            for (const auto& [sp, tp] : d.transition[ja * S() + s])
                for (const auto& [jo, op] : d.observation[ja * S() + sp]) {
                    auto it = cells.find({sp, jo});
                    acc += tp * op * (it != cells.end() ? it->second : base);
                }
            d.reward[ja * S() + s] = acc;
        }
        if (cost_values_)
            for (double& r : d.reward) r = -r;

        d.validate();
        return d;
    }
};

inline DecPomdp parse_dpomdp(const std::string& text, ParseDiagnostics* diag = nullptr,
                             std::optional<double> gamma_override = std::nullopt) {
    return DpomdpParser(gamma_override).parse(text, diag);
}

inline DecPomdp parse_dpomdp_file(const std::string& path, ParseDiagnostics* diag = nullptr,
                                  std::optional<double> gamma_override = std::nullopt) {
    try {
        return parse_dpomdp(read_file(path), diag, gamma_override);
    } catch (const ParseError& e) {
        throw ParseError(e.line, path + ": " + e.what());
    }
}

/// Single-agent view of a parsed model. Requires |I| = 1.
inline Pomdp to_pomdp(const DecPomdp& d) {
    if (d.num_agents != 1) throw ModelError("model has more than one agent");
    Pomdp m;
    m.state_labels = d.state_labels;
    m.action_labels = d.action_labels[0];
    m.obs_labels = d.obs_labels[0];
    m.transition = d.transition;
    m.observation = d.observation;
    m.reward = d.reward;
    m.initial_belief = d.initial_belief;
    m.discount = d.discount;
    return m;
}

/// Writes a single-agent model in the classic text format. Probabilities are
/// printed with 17 significant digits so parsing the output reproduces the
/// model exactly.
inline std::string emit_pomdp(const Pomdp& m) {
    std::ostringstream out;
    out << "discount: " << format_double(m.discount) << "\n";
    out << "values: reward\n";
    out << "states:";
    for (const auto& s : m.state_labels) out << ' ' << s;
    out << "\nactions:";
    for (const auto& a : m.action_labels) out << ' ' << a;
    out << "\nobservations:";
    for (const auto& o : m.obs_labels) out << ' ' << o;
    out << "\n\nstart:\n";
    std::vector<double> dense(m.num_states(), 0.0);
    for (const auto& [s, p] : m.initial_belief.probs) dense[s] = p;
    for (int s = 0; s < m.num_states(); ++s) out << (s ? " " : "") << format_double(dense[s]);
    out << "\n\n";
    for (int a = 0; a < m.num_actions(); ++a)
        for (int s = 0; s < m.num_states(); ++s)
            for (const auto& [sp, p] : m.trans_row(a, s))
                out << "T: " << m.action_labels[a] << " : " << m.state_labels[s] << " : "
                    << m.state_labels[sp] << " " << format_double(p) << "\n";
    out << "\n";
    for (int a = 0; a < m.num_actions(); ++a)
        for (int sp = 0; sp < m.num_states(); ++sp)
            for (const auto& [o, p] : m.obs_row(a, sp))
                out << "O: " << m.action_labels[a] << " : " << m.state_labels[sp] << " : "
                    << m.obs_labels[o] << " " << format_double(p) << "\n";
    out << "\n";
    for (int a = 0; a < m.num_actions(); ++a)
        for (int s = 0; s < m.num_states(); ++s) {
            const double r = m.reward_at(a, s);
            if (r != 0.0)
                out << "R: " << m.action_labels[a] << " : " << m.state_labels[s] << " : * : * "
                    << format_double(r) << "\n";
        }
    return out.str();
}

}  // namespace jesp

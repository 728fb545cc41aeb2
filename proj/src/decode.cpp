#include "artic/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace artic::decode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_logprob_matrix(const Tensor& log_probs, int blank) {
  if (log_probs.shape.size() != 2 || log_probs.shape[0] < 1 || log_probs.shape[1] < 2) {
    throw std::invalid_argument("decode: log_probs must be a T x C matrix with C >= 2");
  }
  if (blank < 0 || blank >= log_probs.shape[1]) {
    throw std::invalid_argument("decode: blank index out of range");
  }
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

NGramModel train_ngram(const std::vector<std::string>& corpus, int order, double k) {
  if (corpus.empty()) throw std::invalid_argument("train_ngram: empty corpus");
  if (order < 1 || order > 5) {
    throw std::invalid_argument("train_ngram: order must be in [1, 5], got " +
                                std::to_string(order));
  }
  if (!(k > 0.0)) throw std::invalid_argument("train_ngram: smoothing k must be positive");

  NGramModel m;
  m.order = order;
  m.k = k;
  std::set<char> vocab;
  for (const std::string& line : corpus) {
    for (char ch : line) {
      if (ch == kBoundary || ch == '\t' || ch == '\n') {
        throw std::invalid_argument("train_ngram: transcript contains a reserved character");
      }
      vocab.insert(ch);
    }
  }
  if (vocab.empty()) throw std::invalid_argument("train_ngram: corpus has no symbols");
  m.vocab.assign(vocab.begin(), vocab.end());

  for (const std::string& line : corpus) {
    std::string padded(static_cast<size_t>(order - 1), kBoundary);
    padded += line;
    for (size_t i = static_cast<size_t>(order - 1); i < padded.size(); ++i) {
      std::string ctx = padded.substr(i - (order - 1), order - 1);
      char sym = padded[i];
      m.counts[ctx][sym] += 1;
      m.context_totals[ctx] += 1;
    }
  }
  return m;
}

double lm_logprob(const NGramModel& model, const std::string& context, char symbol) {
  if (!std::binary_search(model.vocab.begin(), model.vocab.end(), symbol)) {
    throw std::invalid_argument(std::string("lm_logprob: unknown symbol '") + symbol + "'");
  }
  std::string padded(static_cast<size_t>(model.order - 1), kBoundary);
  padded += context;
  std::string ctx = padded.substr(padded.size() - (model.order - 1));

  long long count = 0;
  long long total = 0;
  auto it = model.counts.find(ctx);
  if (it != model.counts.end()) {
    auto jt = it->second.find(symbol);
    if (jt != it->second.end()) count = jt->second;
    total = model.context_totals.at(ctx);
  }
  double v = static_cast<double>(model.vocab.size());
  return std::log((count + model.k) / (total + model.k * v));
}

void save_ngram(const NGramModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_ngram: cannot open " + path);
  out << "NGRAM v1 order=" << model.order << " k=" << format_real(model.k) << "\n";
  for (const auto& [ctx, row] : model.counts) {
    for (const auto& [sym, count] : row) {
      out << ctx << '\t' << sym << '\t' << count << '\n';
    }
  }
  if (!out.good()) throw std::runtime_error("save_ngram: write failed for " + path);
}

NGramModel load_ngram(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ngram: cannot open " + path);
  std::string header;
  std::getline(in, header);
  int order = 0;
  double k = 0.0;
  if (std::sscanf(header.c_str(), "NGRAM v1 order=%d k=%lf", &order, &k) != 2) {
    throw std::runtime_error("load_ngram: unsupported LM format in " + path);
  }
  NGramModel m;
  m.order = order;
  m.k = k;
  if (m.order < 1 || m.order > 5 || !(m.k > 0.0)) {
    throw std::runtime_error("load_ngram: invalid header values in " + path);
  }
  std::set<char> vocab;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t tab1 = line.find('\t');
    size_t tab2 = (tab1 == std::string::npos) ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || tab2 != tab1 + 2) {
      throw std::runtime_error("load_ngram: malformed line " + std::to_string(lineno) + " in " +
                               path);
    }
    std::string ctx = line.substr(0, tab1);
    char sym = line[tab1 + 1];
    long long count = 0;
    try {
      count = std::stoll(line.substr(tab2 + 1));
    } catch (const std::exception&) {
      throw std::runtime_error("load_ngram: bad count on line " + std::to_string(lineno) +
                               " in " + path);
    }
    if (static_cast<int>(ctx.size()) != m.order - 1 || count <= 0) {
      throw std::runtime_error("load_ngram: bad entry on line " + std::to_string(lineno) +
                               " in " + path);
    }
    m.counts[ctx][sym] += count;
    m.context_totals[ctx] += count;
    vocab.insert(sym);
  }
  if (vocab.empty()) throw std::runtime_error("load_ngram: no count entries in " + path);
  m.vocab.assign(vocab.begin(), vocab.end());
  return m;
}

std::vector<int> greedy_decode(const Tensor& log_probs, int blank) {
  check_logprob_matrix(log_probs, blank);
  int T = log_probs.shape[0], C = log_probs.shape[1];
  std::vector<int> out;
  int prev = blank;
  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.data.data() + static_cast<size_t>(t) * C;
    int best = 0;
    for (int c = 1; c < C; ++c) {
      if (row[c] > row[best]) best = c;  // ties keep the lowest index
    }
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

std::string ids_to_text(const std::vector<int>& ids, const std::string& alphabet) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(alphabet.size())) {
      throw std::invalid_argument("ids_to_text: class id " + std::to_string(id) +
                                  " outside alphabet of size " +
                                  std::to_string(alphabet.size()));
    }
    out.push_back(alphabet[static_cast<size_t>(id)]);
  }
  return out;
}

namespace {

struct PrefixState {
  double p_blank = kNegInf;
  double p_nonblank = kNegInf;
  double lm_score = 0.0;
};

// Shallow-fusion score for one extension. The decoder's alphabet may contain
// symbols the LM never saw (small training subsets); those score at the
// uniform-ignorance floor 1/|V| instead of being an error, matching what an
// unseen context yields.
double fusion_logprob(const NGramModel& lm, const std::string& context, char symbol) {
  if (!std::binary_search(lm.vocab.begin(), lm.vocab.end(), symbol)) {
    return -std::log(static_cast<double>(lm.vocab.size()));
  }
  return lm_logprob(lm, context, symbol);
}

double combined_score(const std::string& prefix, const PrefixState& s, bool with_lm,
                      const DecodeConfig& cfg) {
  double acoustic = logsumexp2(s.p_blank, s.p_nonblank);
  double lm_term = with_lm ? cfg.alpha * s.lm_score : 0.0;
  return acoustic + lm_term + cfg.beta * static_cast<double>(prefix.size());
}

std::vector<BeamHypothesis> rank_prefixes(const std::map<std::string, PrefixState>& prefixes,
                                          bool with_lm, const DecodeConfig& cfg) {
  std::vector<BeamHypothesis> ranked;
  ranked.reserve(prefixes.size());
  for (const auto& [prefix, state] : prefixes) {
    BeamHypothesis h;
    h.prefix = prefix;
    h.p_blank = state.p_blank;
    h.p_nonblank = state.p_nonblank;
    h.lm_score = state.lm_score;
    h.score = combined_score(prefix, state, with_lm, cfg);
    ranked.push_back(std::move(h));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const BeamHypothesis& a, const BeamHypothesis& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.prefix < b.prefix;  // deterministic tie-break
                   });
  return ranked;
}

}  // namespace

std::vector<BeamHypothesis> beam_search(const Tensor& log_probs, const std::string& alphabet,
                                        const NGramModel* lm, const DecodeConfig& cfg) {
  check_logprob_matrix(log_probs, cfg.blank);
  int T = log_probs.shape[0], C = log_probs.shape[1];
  if (static_cast<int>(alphabet.size()) != C - 1) {
    throw std::invalid_argument("beam_search: alphabet size " + std::to_string(alphabet.size()) +
                                " must equal class count minus blank (" + std::to_string(C - 1) +
                                ")");
  }
  if (cfg.beam_width < 1) throw std::invalid_argument("beam_search: beam_width must be >= 1");
  bool with_lm = lm != nullptr;

  std::map<std::string, PrefixState> beam;
  beam[""].p_blank = 0.0;  // empty prefix, all mass on "ended in blank"

  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.data.data() + static_cast<size_t>(t) * C;
    std::map<std::string, PrefixState> next;
    for (const auto& [prefix, state] : beam) {
      double total = logsumexp2(state.p_blank, state.p_nonblank);

      // stay on this prefix via a blank frame
      PrefixState& same = next[prefix];
      same.lm_score = state.lm_score;
      same.p_blank = logsumexp2(same.p_blank, total + row[cfg.blank]);

      for (int c = 0; c < C; ++c) {
        if (c == cfg.blank) continue;
        char ch = alphabet[static_cast<size_t>(c < cfg.blank ? c : c - 1)];
        double lp = row[c];
        if (!prefix.empty() && prefix.back() == ch) {
          // repeat frame collapses into the same prefix
          same.p_nonblank = logsumexp2(same.p_nonblank, state.p_nonblank + lp);
          // extending needs a blank in between: only the blank mass may grow it
          std::string ext = prefix + ch;
          PrefixState& grown = next[ext];
          if (grown.p_blank == kNegInf && grown.p_nonblank == kNegInf) {
            grown.lm_score =
                state.lm_score + (with_lm ? fusion_logprob(*lm, prefix, ch) : 0.0);
          }
          grown.p_nonblank = logsumexp2(grown.p_nonblank, state.p_blank + lp);
        } else {
          std::string ext = prefix + ch;
          PrefixState& grown = next[ext];
          if (grown.p_blank == kNegInf && grown.p_nonblank == kNegInf) {
            grown.lm_score =
                state.lm_score + (with_lm ? fusion_logprob(*lm, prefix, ch) : 0.0);
          }
          grown.p_nonblank = logsumexp2(grown.p_nonblank, total + lp);
        }
      }
    }

    std::vector<BeamHypothesis> ranked = rank_prefixes(next, with_lm, cfg);
    if (static_cast<int>(ranked.size()) > cfg.beam_width) ranked.resize(cfg.beam_width);
    beam.clear();
    for (const BeamHypothesis& h : ranked) {
      PrefixState s;
      s.p_blank = h.p_blank;
      s.p_nonblank = h.p_nonblank;
      s.lm_score = h.lm_score;
      beam.emplace(h.prefix, s);
    }
  }

  std::vector<BeamHypothesis> ranked = rank_prefixes(beam, with_lm, cfg);
  if (static_cast<int>(ranked.size()) > cfg.beam_width) ranked.resize(cfg.beam_width);
  return ranked;
}

std::pair<std::string, double> exhaustive_oracle(const Tensor& log_probs,
                                                 const std::string& alphabet,
                                                 const NGramModel* lm, const DecodeConfig& cfg) {
  check_logprob_matrix(log_probs, cfg.blank);
  int T = log_probs.shape[0], C = log_probs.shape[1];
  if (static_cast<int>(alphabet.size()) != C - 1) {
    throw std::invalid_argument("exhaustive_oracle: alphabet size must be class count minus 1");
  }
  double n_paths = std::pow(static_cast<double>(C), T);
  if (n_paths > 1e6) {
    throw std::invalid_argument("exhaustive_oracle: instance too large");
  }

  std::map<std::string, double> pooled;  // collapsed transcript -> log prob
  std::vector<int> path(T, 0);
  long long total = static_cast<long long>(n_paths);
  for (long long idx = 0; idx < total; ++idx) {
    long long rem = idx;
    double lp = 0.0;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % C);
      rem /= C;
      lp += log_probs.data[static_cast<size_t>(t) * C + path[t]];
    }
    std::string collapsed;
    for (int t = 0; t < T; ++t) {
      if (t > 0 && path[t] == path[t - 1]) continue;
      if (path[t] == cfg.blank) continue;
      int sym = path[t] < cfg.blank ? path[t] : path[t] - 1;
      collapsed.push_back(alphabet[static_cast<size_t>(sym)]);
    }
    auto [it, inserted] = pooled.emplace(collapsed, lp);
    if (!inserted) it->second = logsumexp2(it->second, lp);
  }

  bool with_lm = lm != nullptr;
  std::string best;
  double best_score = kNegInf;
  bool first = true;
  for (const auto& [text, lp] : pooled) {
    double lm_total = 0.0;
    if (with_lm) {
      for (size_t i = 0; i < text.size(); ++i) {
        lm_total += fusion_logprob(*lm, text.substr(0, i), text[i]);
      }
    }
    double score = lp + (with_lm ? cfg.alpha * lm_total : 0.0) +
                   cfg.beta * static_cast<double>(text.size());
    if (first || score > best_score) {  // map order makes ties lexicographic
      best = text;
      best_score = score;
      first = false;
    }
  }
  return {best, best_score};
}

}  // namespace artic::decode

#include "lh/textsearch.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "lh/error.hpp"
#include "lh/util.hpp"

namespace lh::textsearch {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary parse_vocabulary(std::string_view text) {
  Vocabulary v;
  for (const auto& raw : split(text, '\n')) {
    auto line = std::string_view(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    v.terms.insert(join(tokens, " "));
    v.words.insert(tokens.begin(), tokens.end());
  }
  return v;
}

Vocabulary load_vocabulary(const std::filesystem::path& path) { return parse_vocabulary(read_file(path)); }

SearchIndex::SearchIndex(const std::vector<taxonomy::RoutineRecord>& routines, Vocabulary vocabulary)
    : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.terms.empty()) fail(ErrorKind::invalid_argument, "empty vocabulary");
  if (routines.empty()) fail(ErrorKind::invalid_argument, "no routines to index");
  for (const auto& r : routines) {
    names_[to_lower(r.name)] = r.id;
    display_name_[r.id] = r.name;
  }
  for (const auto& r : routines) {
    const std::pair<const std::string*, int> fields[] = {
        {&r.name, name_weight}, {&r.description, description_weight}, {&r.documentation, documentation_weight}};
    for (const auto& [text, weight] : fields) {
      std::set<std::string> seen;
      for (const auto& tok : tokenize(*text)) {
        if (!vocabulary_.words.count(tok) && !names_.count(tok)) continue;
        ++frequency_[tok];
        if (seen.insert(tok).second) postings_[tok][r.id] += weight;
      }
    }
  }
}

std::size_t SearchIndex::frequency(const std::string& word) const {
  auto it = frequency_.find(word);
  return it == frequency_.end() ? 0 : it->second;
}

std::vector<std::string> SearchIndex::usable_tokens(std::string_view text) const {
  std::vector<std::string> out;
  for (auto& tok : tokenize(text))
    if ((vocabulary_.words.count(tok) || names_.count(tok)) &&
        std::find(out.begin(), out.end(), tok) == out.end())
      out.push_back(std::move(tok));
  return out;
}

std::vector<Hit> SearchIndex::query(std::string_view text, Mode mode) const {
  if (trim(text).empty()) fail(ErrorKind::invalid_argument, "empty query");
  const auto tokens = usable_tokens(text);
  std::map<std::string, Hit> hits;
  std::map<std::string, std::size_t> matched;
  for (const auto& tok : tokens) {
    auto it = postings_.find(tok);
    if (it == postings_.end()) continue;
    for (const auto& [id, weight] : it->second) {
      auto& h = hits[id];
      h.routine_id = id;
      h.score += weight;
      ++matched[id];
      if (names_.count(tok) && names_.at(tok) == id) h.exact_name = true;
    }
  }
  std::vector<Hit> out;
  for (auto& [id, h] : hits)
    if (mode == Mode::any || matched[id] == tokens.size()) out.push_back(h);
  std::sort(out.begin(), out.end(), [&](const Hit& a, const Hit& b) {
    if (a.exact_name != b.exact_name) return a.exact_name;
    if (a.score != b.score) return a.score > b.score;
    const auto& na = display_name_.at(a.routine_id);
    const auto& nb = display_name_.at(b.routine_id);
    return na != nb ? na < nb : a.routine_id < b.routine_id;
  });
  return out;
}

std::vector<std::string> SearchIndex::autocomplete(std::string_view prefix) const {
  const auto p = to_lower(trim(prefix));
  if (p.empty()) fail(ErrorKind::invalid_argument, "empty prefix");
  std::set<std::pair<std::string, std::string>> found;  // (lowercase, display)
  for (auto it = vocabulary_.terms.lower_bound(p); it != vocabulary_.terms.end() && it->rfind(p, 0) == 0; ++it)
    found.emplace(*it, *it);
  for (auto it = names_.lower_bound(p); it != names_.end() && it->first.rfind(p, 0) == 0; ++it)
    found.emplace(it->first, display_name_.at(it->second));
  std::vector<std::string> out;
  for (const auto& [key, display] : found) {
    if (out.size() == max_suggestions) break;
    out.push_back(display);
  }
  return out;
}

std::optional<std::string> SearchIndex::spell_correct(std::string_view token) const {
  const auto tokens = tokenize(token);
  if (tokens.size() != 1) fail(ErrorKind::invalid_argument, "spell_correct takes a single word");
  const auto& t = tokens.front();
  if (vocabulary_.words.count(t) || names_.count(t)) return t;
  std::optional<std::string> best;
  std::size_t best_dist = max_correction_distance + 1, best_freq = 0;
  auto consider = [&](const std::string& w) {
    // Length difference is a lower bound on the distance.
    const auto gap = w.size() > t.size() ? w.size() - t.size() : t.size() - w.size();
    if (gap > max_correction_distance) return;
    const auto d = damerau_levenshtein(t, w);
    if (d > max_correction_distance) return;
    const auto f = frequency(w);
    if (!best || d < best_dist || (d == best_dist && (f > best_freq || (f == best_freq && w < *best)))) {
      best = w;
      best_dist = d;
      best_freq = f;
    }
  };
  for (const auto& w : vocabulary_.words) consider(w);
  for (const auto& [w, id] : names_) consider(w);
  return best;
}

SearchIndex build_index(const taxonomy::Taxonomy& taxonomy, Vocabulary vocabulary) {
  return SearchIndex(taxonomy.routines(), std::move(vocabulary));
}

std::size_t damerau_levenshtein(std::string_view a, std::string_view b) {
  const std::size_t la = a.size(), lb = b.size(), inf = la + lb;
  std::vector<std::vector<std::size_t>> d(la + 2, std::vector<std::size_t>(lb + 2, 0));
  d[0][0] = inf;
  for (std::size_t i = 0; i <= la; ++i) {
    d[i + 1][0] = inf;
    d[i + 1][1] = i;
  }
  for (std::size_t j = 0; j <= lb; ++j) {
    d[0][j + 1] = inf;
    d[1][j + 1] = j;
  }
  std::array<std::size_t, 256> last_row{};
  for (std::size_t i = 1; i <= la; ++i) {
    std::size_t last_col = 0;
    for (std::size_t j = 1; j <= lb; ++j) {
      const std::size_t i1 = last_row[static_cast<unsigned char>(b[j - 1])];
      const std::size_t j1 = last_col;
      std::size_t cost = 1;
      if (a[i - 1] == b[j - 1]) {
        cost = 0;
        last_col = j;
      }
      d[i + 1][j + 1] = std::min({d[i][j] + cost, d[i + 1][j] + 1, d[i][j + 1] + 1,
                                  d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1)});
    }
    last_row[static_cast<unsigned char>(a[i - 1])] = i;
  }
  return d[la + 1][lb + 1];
}

}  // namespace lh::textsearch

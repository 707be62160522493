#include "sagcn/corpus.hpp"

#include <json.hpp>

#include <fstream>
#include <limits>

namespace sagcn {

using nlohmann::json;

Idx IdMaps::user(const std::string& raw) {
  auto it = user_index.find(raw);
  if (it != user_index.end()) return it->second;
  const Idx idx = num_users();
  user_index.emplace(raw, idx);
  user_ids.push_back(raw);
  return idx;
}

Idx IdMaps::item(const std::string& raw) {
  auto it = item_index.find(raw);
  if (it != item_index.end()) return it->second;
  const Idx idx = num_items();
  item_index.emplace(raw, idx);
  item_ids.push_back(raw);
  return idx;
}

void IdMaps::save(const std::filesystem::path& path) const {
  json j;
  j["users"] = user_ids;
  j["items"] = item_ids;
  write_file_atomic(path, j.dump(2) + "\n");
}

IdMaps IdMaps::load(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  IdMaps maps;
  for (const auto& u : j.at("users")) maps.user(u.get<std::string>());
  for (const auto& i : j.at("items")) maps.item(i.get<std::string>());
  return maps;
}

std::vector<Edge> Corpus::pairs() const {
  std::vector<Edge> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({ids.user_index.at(r.user_id), ids.item_index.at(r.item_id)});
  }
  return out;
}

namespace {

/* RFC 4180 style reader: quoted fields may contain commas, doubled quotes
   and newlines. Returns false at end of stream. */
bool read_csv_row(std::istream& in, std::vector<std::string>& fields, std::int64_t& line_no) {
  fields.clear();
  int c = in.get();
  if (c == EOF) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  while (true) {
    if (c == EOF) {
      fields.push_back(field);
      return true;
    }
    any = true;
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_no;
        field.push_back(ch);
      }
    } else {
      if (ch == '"' && field.empty()) {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(field);
        field.clear();
      } else if (ch == '\n') {
        ++line_no;
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(field);
        return true;
      } else {
        field.push_back(ch);
      }
    }
    c = in.get();
  }
  (void)any;
}

InteractionRecord parse_json_line(const std::string& line, std::int64_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw CorpusError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw CorpusError("record is not a JSON object", line_no);
  InteractionRecord rec;
  if (!j.contains("reviewerID") || !j["reviewerID"].is_string())
    throw CorpusError("missing reviewerID", line_no);
  if (!j.contains("asin") || !j["asin"].is_string())
    throw CorpusError("missing asin", line_no);
  rec.user_id = j["reviewerID"].get<std::string>();
  rec.item_id = j["asin"].get<std::string>();
  if (rec.user_id.empty() || rec.item_id.empty())
    throw CorpusError("empty user or item id", line_no);
  if (j.contains("overall") && j["overall"].is_number())
    rec.rating = j["overall"].get<double>();
  if (j.contains("reviewText") && j["reviewText"].is_string())
    rec.review_text = j["reviewText"].get<std::string>();
  if (j.contains("unixReviewTime") && j["unixReviewTime"].is_number_integer())
    rec.timestamp = j["unixReviewTime"].get<std::int64_t>();
  return rec;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus: " + path.string());

  std::vector<InteractionRecord> raw;
  Corpus corpus;

  if (format == CorpusFormat::AmazonJsonLines) {
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      raw.push_back(parse_json_line(line, line_no));
    }
  } else {
    std::vector<std::string> fields;
    std::int64_t line_no = 1;
    if (!read_csv_row(in, fields, line_no)) throw CorpusError("empty corpus: " + path.string());
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < fields.size(); ++i) col[trim(fields[i])] = i;
    for (const char* required : {"reviewerID", "asin", "reviewText"}) {
      if (!col.count(required))
        throw CorpusError(std::string("CSV header missing column: ") + required, 1);
    }
    while (true) {
      const std::int64_t row_start = line_no;
      if (!read_csv_row(in, fields, line_no)) break;
      if (fields.size() == 1 && trim(fields[0]).empty()) continue;
      auto get = [&](const char* name) -> std::string {
        auto it = col.find(name);
        if (it == col.end() || it->second >= fields.size()) return "";
        return fields[it->second];
      };
      InteractionRecord rec;
      rec.user_id = get("reviewerID");
      rec.item_id = get("asin");
      rec.review_text = get("reviewText");
      if (rec.user_id.empty() || rec.item_id.empty())
        throw CorpusError("empty user or item id", row_start);
      const std::string rating = trim(get("overall"));
      if (!rating.empty()) {
        try {
          rec.rating = std::stod(rating);
        } catch (const std::exception&) {
          throw CorpusError("invalid rating: " + rating, row_start);
        }
      }
      const std::string ts = trim(get("unixReviewTime"));
      if (!ts.empty()) {
        try {
          rec.timestamp = std::stoll(ts);
        } catch (const std::exception&) {
          throw CorpusError("invalid timestamp: " + ts, row_start);
        }
      }
      raw.push_back(std::move(rec));
    }
  }

  if (raw.empty()) throw CorpusError("empty corpus: " + path.string());

  /* Assign dense ids in first-appearance order, then collapse duplicate
     pairs keeping the most recent review. */
  std::unordered_map<std::uint64_t, std::size_t> seen;  /* pair key -> slot in records */
  for (auto& r : raw) {
    const Idx u = corpus.ids.user(r.user_id);
    const Idx i = corpus.ids.item(r.item_id);
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(i);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, corpus.records.size());
      corpus.records.push_back(std::move(r));
    } else {
      InteractionRecord& kept = corpus.records[it->second];
      const std::int64_t old_ts = kept.timestamp.value_or(std::numeric_limits<std::int64_t>::min());
      const std::int64_t new_ts = r.timestamp.value_or(std::numeric_limits<std::int64_t>::min());
      if (new_ts > old_ts) kept = std::move(r);  /* ties and missing stamps keep the earliest */
    }
  }
  if (corpus.ids.num_users() > (Idx(1) << 31) || corpus.ids.num_items() > (Idx(1) << 31))
    throw CorpusError("corpus too large for 32-bit pair keys");
  return corpus;
}

namespace {

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

json edges_to_json(const std::vector<Edge>& edges) {
  json arr = json::array();
  for (const auto& e : edges) arr.push_back({e.user, e.item});
  return arr;
}

std::vector<Edge> edges_from_json(const json& arr) {
  std::vector<Edge> out;
  out.reserve(arr.size());
  for (const auto& e : arr) out.push_back({e.at(0).get<Idx>(), e.at(1).get<Idx>()});
  return out;
}

}  // namespace

void SplitSpec::save(const std::filesystem::path& path) const {
  json j;
  j["rng_seed"] = rng_seed;
  j["train"] = edges_to_json(train);
  j["validation"] = edges_to_json(validation);
  j["test"] = edges_to_json(test);
  write_file_atomic(path, j.dump() + "\n");
}

SplitSpec SplitSpec::load(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  SplitSpec s;
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.train = edges_from_json(j.at("train"));
  s.validation = edges_from_json(j.at("validation"));
  s.test = edges_from_json(j.at("test"));
  return s;
}

SplitSpec split_interactions(std::span<const Edge> interactions, Idx num_users,
                             double ratio_test, double ratio_val, std::uint64_t seed) {
  std::vector<std::vector<Idx>> by_user(static_cast<std::size_t>(num_users));
  for (const auto& e : interactions) {
    if (e.user < 0 || e.user >= num_users) throw std::invalid_argument("split: user index out of range");
    by_user[static_cast<std::size_t>(e.user)].push_back(e.item);
  }

  SplitSpec split;
  split.rng_seed = seed;
  for (Idx u = 0; u < num_users; ++u) {
    auto& items = by_user[static_cast<std::size_t>(u)];
    const std::int64_t deg = static_cast<std::int64_t>(items.size());
    if (deg == 0) continue;

    std::int64_t n_test = 0;
    if (deg >= 2) n_test = std::max<std::int64_t>(1, round_half_up(ratio_test * static_cast<double>(deg)));
    n_test = std::min(n_test, deg - 1);
    const std::int64_t remaining = deg - n_test;
    std::int64_t n_val = round_half_up(ratio_val * static_cast<double>(remaining));
    n_val = std::min(n_val, remaining - 1);  /* train keeps at least one interaction */

    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(u)));
    rng.shuffle(items);
    for (std::int64_t k = 0; k < deg; ++k) {
      const Edge e{u, items[static_cast<std::size_t>(k)]};
      if (k < n_test)
        split.test.push_back(e);
      else if (k < n_test + n_val)
        split.validation.push_back(e);
      else
        split.train.push_back(e);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace sagcn

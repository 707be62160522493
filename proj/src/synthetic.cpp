#include "sagcn/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace sagcn {

using nlohmann::json;

namespace {

std::string padded_id(char prefix, Idx n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%04lld", prefix, static_cast<long long>(n));
  return buf;
}

const char* kNoisePhrases[] = {
    "Arrived promptly and exactly as described.",
    "Packaging was intact and delivery was quick.",
    "Second one of these for the office.",
};

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& config) {
  if (config.num_users < 1 || config.num_items < 2 || config.blocks_per_aspect < 1)
    throw std::invalid_argument("gen_synthetic: invalid size parameters");
  if (config.within_block_p <= 0.0 || config.within_block_p > 1.0)
    throw std::invalid_argument("gen_synthetic: within_block_p must be in (0,1]");
  const Idx half = config.num_items / 2;
  if (half < config.blocks_per_aspect)
    throw std::invalid_argument("gen_synthetic: not enough items for the requested blocks");

  SyntheticData data;
  data.store.num_users = config.num_users;
  data.store.num_items = config.num_items;
  data.store.aspect_names = {"quality", "price"};
  if (config.control_aspect) data.store.aspect_names.push_back("style");
  data.store.aspect_edges.resize(data.store.aspect_names.size());

  const Idx q_block = half / config.blocks_per_aspect;
  const Idx p_block = (config.num_items - half) / config.blocks_per_aspect;

  Rng rng(config.seed);
  std::int64_t timestamp = 1600000000;
  for (Idx u = 0; u < config.num_users; ++u) {
    const Idx gq = u % config.blocks_per_aspect;
    const Idx gp = (u / config.blocks_per_aspect) % config.blocks_per_aspect;

    /* item -> aspect tags for this user's interactions */
    std::map<Idx, std::set<std::string>> tagged;
    for (Idx n = 0; n < q_block; ++n) {
      const Idx i = gq * q_block + n;
      if (rng.uniform() < config.within_block_p) tagged[i].insert("quality");
    }
    for (Idx n = 0; n < p_block; ++n) {
      const Idx i = half + gp * p_block + n;
      if (rng.uniform() < config.within_block_p) tagged[i].insert("price");
    }
    if (tagged.empty()) {
      tagged[gq * q_block].insert("quality");
      tagged[half + gp * p_block].insert("price");
    }
    Idx noise_added = 0;
    while (noise_added < config.noise_per_user) {
      const Idx i = static_cast<Idx>(rng.below(static_cast<std::uint64_t>(config.num_items)));
      if (tagged.count(i)) continue;
      tagged[i];  /* no aspect mention */
      ++noise_added;
    }
    if (config.control_aspect) {
      for (auto& [i, tags] : tagged) {
        if (!tags.empty() && rng.uniform() < 0.4) tags.insert("style");
      }
    }

    for (const auto& [i, tags] : tagged) {
      InteractionRecord rec;
      rec.user_id = padded_id('u', u);
      rec.item_id = padded_id('i', i);
      rec.rating = 4.0 + static_cast<double>(rng.below(2));
      rec.timestamp = timestamp++;
      std::string text;
      if (tags.count("quality")) text += "The quality is excellent. ";
      if (tags.count("price")) text += "The price was fair. ";
      if (tags.count("style")) text += "The style stands out. ";
      if (text.empty())
        text = kNoisePhrases[static_cast<std::size_t>(rng.below(3))];
      rec.review_text = trim(text);
      data.records.push_back(std::move(rec));

      data.store.base_edges.push_back({u, i});
      for (const auto& tag : tags) {
        const auto it = std::find(data.store.aspect_names.begin(), data.store.aspect_names.end(), tag);
        data.store.aspect_edges[static_cast<std::size_t>(
            it - data.store.aspect_names.begin())].push_back({u, i});
      }
    }
  }
  std::sort(data.store.base_edges.begin(), data.store.base_edges.end());
  for (auto& edges : data.store.aspect_edges) std::sort(edges.begin(), edges.end());
  data.store.validate();
  return data;
}

void write_synthetic_corpus(const std::filesystem::path& path, const SyntheticData& data) {
  std::ostringstream out;
  for (const auto& rec : data.records) {
    json j;
    j["reviewerID"] = rec.user_id;
    j["asin"] = rec.item_id;
    j["overall"] = rec.rating;
    j["reviewText"] = rec.review_text;
    if (rec.timestamp) j["unixReviewTime"] = *rec.timestamp;
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

}  // namespace sagcn

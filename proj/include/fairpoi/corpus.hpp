#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "fairpoi/types.hpp"

namespace fairpoi::corpus {

// Column separator for the delimited dataset files.
enum class Delimiter { Tab, Comma };

inline char delimiter_char(Delimiter d) {
  return d == Delimiter::Tab ? '\t' : ',';
}

// Reads the check-in / POI / social files described in the README. A header
// row is recognized by a non-numeric, non-date timestamp (check-ins) or a
// non-numeric latitude (POIs); the social file accepts the literal header
// "user_id,friend_id". Timestamps may be integer epoch seconds or ISO-8601
// dates, converted to epoch seconds assuming UTC. Duplicate identical
// check-ins are kept: repeat visits are real popularity signal.
//
// Throws DataError naming file, line and column on a malformed row, and on a
// check-in referencing a POI absent from the POI file. Social edges whose
// endpoints never check in are dropped (the users table is defined by the
// check-in file).
Dataset load_dataset(const std::filesystem::path& checkin_path,
                     const std::filesystem::path& poi_path,
                     const std::optional<std::filesystem::path>& social_path = {},
                     Delimiter delim = Delimiter::Tab);

// Alternates POI-filter and user-filter passes until both thresholds hold
// simultaneously (removing users can push POIs back under threshold and vice
// versa). Counts are distinct visitors per POI and distinct POIs per user,
// not raw check-in totals. Throws DataError when nothing survives.
Dataset filter_sparse(const Dataset& d, std::size_t min_users_per_poi = 10,
                      std::size_t min_pois_per_user = 10);

// Per user, sorted by (timestamp, poi_id): the first ceil(f_train*n) go to
// train, the next ceil(f_val*n) to validation, the remainder to test. When
// the two ceils already cover all n check-ins the validation share is
// shrunk so the test split keeps at least one check-in per user.
SplitDataset chronological_split(
    const Dataset& d, std::array<double, 3> fractions = {0.7, 0.2, 0.1});

// Users ranked by train check-in count (desc, ties by id asc): the top
// ceil(20%) are Active. POIs analogously: top ceil(20%) are ShortHead.
GroupAssignment assign_groups(const Dataset& train);

// Deterministic desk-scale dataset: POI popularity weights follow a
// discrete power law, POIs sit in uniform disks around cluster centers, and
// users check in mostly within their home cluster.
Dataset generate_synthetic(const SyntheticConfig& cfg);

StatsSummary dataset_stats(const Dataset& d, const GroupAssignment& g);

// StatsSummary as a flat key=value block, one pair per line.
std::string stats_to_text(const StatsSummary& s);
// Same keys as JSON.
std::string stats_to_json(const StatsSummary& s);

// Writes d back out as check-in/POI/social files under dir (used by the
// ingest/synth/split subcommands).
void write_dataset(const Dataset& d, const std::filesystem::path& dir,
                   const std::string& prefix = "",
                   Delimiter delim = Delimiter::Tab);

}  // namespace fairpoi::corpus

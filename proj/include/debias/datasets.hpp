#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "debias/evalharness.hpp"

namespace debias {

/// Target words of the filtered gender subset.
const std::vector<std::string>& default_stereoset_targets();

/// Intrasentence examples of a StereoSet JSON file (data.intrasentence[*]).
/// Each candidate's fill is the part of its sentence that replaces BLANK in
/// the context. Throws ParseError with the offending line.
std::vector<StereoExample> parse_stereoset(std::string_view json_text);
std::vector<StereoExample> load_stereoset(const std::filesystem::path& path);

/// Keeps examples whose target (case-insensitive) is listed.
std::vector<StereoExample> filter_stereoset(const std::vector<StereoExample>& examples,
                                            const std::vector<std::string>& targets);

std::vector<StereoExample> load_filtered_stereoset(
    const std::filesystem::path& path,
    const std::vector<std::string>& targets = default_stereoset_targets());

/// Fill of `sentence` relative to `context` (which holds one BLANK).
std::string extract_fill(std::string_view context, std::string_view sentence);

/// CrowS-Pairs CSV (RFC 4180 quoting, header row naming sent_more,
/// sent_less, stereo_antistereo, bias_type). sent_more becomes the stereo side.
std::vector<CrowsPair> parse_crows_csv(std::string_view csv_text);
std::vector<CrowsPair> load_crows(const std::filesystem::path& path);

/// SEAT JSON test: targ1/targ2/attr1/attr2 objects with "examples" arrays.
SeatTest parse_seat_json(std::string_view json_text, std::string id);
SeatTest load_seat(const std::filesystem::path& path, std::string id = "");

}  // namespace debias

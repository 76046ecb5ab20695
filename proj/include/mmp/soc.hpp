#pragma once

// System-of-care contact study: 26 distinct response patterns, 74 subjects.
// j1 = primary care, j2 = specialty care.

#include <sstream>
#include <string_view>

#include "mmp/data.hpp"

namespace mmp::soc {

inline constexpr std::string_view pattern_csv =
    "j1_DD,j1_MH,j1_JJ,j1_CW,j1_ED,j2_DD,j2_MH,j2_JJ,j2_CW,j2_ED,count\n"
    "0,0,0,0,0,0,0,0,0,1,17\n"
    "0,0,0,0,0,0,0,0,0,0,16\n"
    "0,1,0,0,0,0,1,0,0,0,5\n"
    "0,0,0,0,1,0,0,0,0,1,5\n"
    "0,1,0,0,0,0,1,0,0,1,3\n"
    "0,0,0,0,0,0,1,0,0,0,3\n"
    "0,0,0,0,0,0,1,0,0,1,3\n"
    "0,1,0,1,0,0,0,0,0,0,2\n"
    "0,0,0,0,1,0,0,0,0,0,2\n"
    "0,0,0,0,0,0,0,0,1,1,2\n"
    "1,0,0,0,0,0,0,0,0,0,1\n"
    "0,1,0,0,0,0,0,0,0,0,1\n"
    "0,1,1,0,0,0,1,1,1,0,1\n"
    "0,1,0,0,1,0,1,0,1,1,1\n"
    "0,1,0,1,0,0,1,0,1,1,1\n"
    "0,0,0,0,1,0,1,0,0,1,1\n"
    "0,1,0,0,0,0,0,0,0,1,1\n"
    "0,0,0,0,1,0,1,0,1,1,1\n"
    "0,0,0,0,1,0,0,1,1,1,1\n"
    "1,0,0,0,1,0,0,0,0,1,1\n"
    "0,0,0,1,1,0,1,0,0,1,1\n"
    "0,0,0,0,0,0,0,0,1,0,1\n"
    "1,0,0,0,0,0,1,0,0,1,1\n"
    "0,0,0,1,0,0,1,0,0,1,1\n"
    "0,0,0,1,0,0,1,0,1,1,1\n"
    "0,1,0,1,0,0,1,1,1,1,1\n";

inline MatchedBinaryTable table() {
  std::istringstream in{std::string(pattern_csv)};
  auto t = parse_csv(in, CsvLayout::pattern_counts);
  return {t.matrix(), t.set_labels(), {"primary", "specialty"}};
}

}  // namespace mmp::soc

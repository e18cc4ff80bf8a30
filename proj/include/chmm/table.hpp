#pragma once

// In-memory delimited tables and locale-independent number formatting.

#include "chmm/error.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>
#include <vector>

namespace chmm {

/// Shortest round-trip decimal form; NaN is written as NA.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw InvariantError("format_double: conversion failed");
  return std::string(buf, end);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw InvariantError("table row width does not match header");
    rows.push_back(std::move(row));
  }

  std::string to_csv() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

}  // namespace chmm

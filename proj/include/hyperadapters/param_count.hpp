#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hyperadapters/tape.hpp"

namespace hyperadapters {

enum class SchemeKind { None, Language, Pair, Hyper };

std::string scheme_name(SchemeKind kind);
SchemeKind parse_scheme(const std::string& name);

struct CountQuery {
  SchemeKind kind = SchemeKind::Language;
  std::int64_t n_languages = 0;
  std::int64_t n_layers = 0;  // encoder + decoder
  std::int64_t d_model = 0;
  std::int64_t bottleneck = 0;
  std::optional<std::int64_t> hidden;
  /// Pair kind: every ordered pair of distinct languages instead of the
  /// pivot-centric 2(N-1) directions.
  bool multi_parallel = false;
  bool include_layernorm = true;
  std::int64_t emb_dim = 50;
  std::int64_t res_blocks = 2;
};

/// Extra parameters of an adapter scheme by closed form, split by component.
/// Throws std::invalid_argument when the hyper kind has no hidden size.
std::map<std::string, std::int64_t> count_breakdown(const CountQuery& q);
std::int64_t count_params(const CountQuery& q);

/// Parameter tensors grouped by the same component names count_breakdown uses.
std::map<std::string, std::int64_t> enumerate_breakdown(const ParameterList& params);

struct AuditRow {
  std::string component;
  std::int64_t formula = 0;
  std::int64_t enumerated = 0;
};

struct AuditResult {
  CountQuery query;
  std::int64_t formula = 0;
  std::int64_t enumerated = 0;
  std::vector<AuditRow> rows;
  bool exact() const { return formula == enumerated; }
};

AuditResult audit_params(const CountQuery& q, const ParameterList& params);

void write_audit_csv_header(std::ostream& out);
void write_audit_csv_row(std::ostream& out, const AuditResult& r);

}  // namespace hyperadapters

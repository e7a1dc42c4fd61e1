#include "hyperadapters/param_count.hpp"

#include <numeric>
#include <stdexcept>

namespace hyperadapters {

std::string scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::None: return "none";
    case SchemeKind::Language: return "language";
    case SchemeKind::Pair: return "pair";
    case SchemeKind::Hyper: return "hyper";
  }
  return "?";
}

SchemeKind parse_scheme(const std::string& name) {
  if (name == "none" || name == "dense") return SchemeKind::None;
  if (name == "language" || name == "lang") return SchemeKind::Language;
  if (name == "pair") return SchemeKind::Pair;
  if (name == "hyper") return SchemeKind::Hyper;
  throw std::invalid_argument("unknown adapter scheme '" + name + "' (none, language, pair, hyper)");
}

std::map<std::string, std::int64_t> count_breakdown(const CountQuery& q) {
  if (q.n_languages < 1 || q.n_layers < 1 || q.d_model < 1 || q.bottleneck < 1) {
    throw std::invalid_argument("count_params needs positive N, L, d_z and d_b");
  }
  const auto N = q.n_languages, L = q.n_layers, dz = q.d_model, db = q.bottleneck;
  std::map<std::string, std::int64_t> out;
  auto regular = [&](std::int64_t tables) {
    const auto blocks = tables * L;
    out["adapter.down"] = blocks * dz * db;
    out["adapter.up"] = blocks * db * dz;
    if (q.include_layernorm) {
      out["adapter.ln_gain"] = blocks * dz;
      out["adapter.ln_bias"] = blocks * dz;
    }
  };
  switch (q.kind) {
    case SchemeKind::None:
      break;
    case SchemeKind::Language:
      regular(N);
      break;
    case SchemeKind::Pair:
      regular(q.multi_parallel ? N * (N - 1) : 2 * (N - 1));
      break;
    case SchemeKind::Hyper: {
      if (!q.hidden) throw std::invalid_argument("hyper parameter count needs d_h");
      const auto dh = *q.hidden;
      if (dh < 1) throw std::invalid_argument("d_h must be positive");
      out["hyper.head_down"] = dh * dz * db;
      out["hyper.head_up"] = dh * db * dz;
      if (q.include_layernorm) {
        const auto e = q.emb_dim, R = q.res_blocks;
        out["hyper.head_gain"] = dh * dz;
        out["hyper.head_bias"] = dh * dz;
        out["hyper.lang_emb"] = N * e;
        out["hyper.layer_emb"] = L * e;
        out["hyper.w_in"] = 3 * e * dh;
        if (R > 0) {
          out["hyper.block.ln_gain"] = R * dh;
          out["hyper.block.ln_bias"] = R * dh;
          out["hyper.block.w1"] = R * dh * dh;
          out["hyper.block.w2"] = R * dh * dh;
        }
      }
      break;
    }
  }
  return out;
}

std::int64_t count_params(const CountQuery& q) {
  const auto parts = count_breakdown(q);
  return std::accumulate(parts.begin(), parts.end(), std::int64_t{0},
                         [](std::int64_t acc, const auto& kv) { return acc + kv.second; });
}

namespace {

std::string component_of(const std::string& name) {
  if (name.rfind("adapter.", 0) == 0) return "adapter." + name.substr(name.rfind('.') + 1);
  // hyper.block<k>.x -> hyper.block.x
  static const std::string block = "hyper.block";
  if (name.rfind(block, 0) == 0) {
    auto rest = name.find('.', block.size());
    return block + name.substr(rest);
  }
  return name;
}

}  // namespace

std::map<std::string, std::int64_t> enumerate_breakdown(const ParameterList& params) {
  std::map<std::string, std::int64_t> out;
  for (const auto& p : params) out[component_of(p->name())] += static_cast<std::int64_t>(p->size());
  return out;
}

AuditResult audit_params(const CountQuery& q, const ParameterList& params) {
  AuditResult r;
  r.query = q;
  const auto formula = count_breakdown(q);
  const auto counted = enumerate_breakdown(params);
  std::map<std::string, AuditRow> rows;
  for (const auto& [k, v] : formula) rows[k] = {k, v, 0};
  for (const auto& [k, v] : counted) {
    rows[k].component = k;
    rows[k].enumerated = v;
  }
  for (auto& [k, row] : rows) {
    r.formula += row.formula;
    r.enumerated += row.enumerated;
    r.rows.push_back(row);
  }
  return r;
}

void write_audit_csv_header(std::ostream& out) { out << "scheme,N,L,d_z,d_b,d_h,formula-count,enumerated-count\n"; }

void write_audit_csv_row(std::ostream& out, const AuditResult& r) {
  const auto& q = r.query;
  out << scheme_name(q.kind) << ',' << q.n_languages << ',' << q.n_layers << ',' << q.d_model << ',' << q.bottleneck
      << ',' << (q.hidden ? std::to_string(*q.hidden) : "") << ',' << r.formula << ',' << r.enumerated << '\n';
}

}  // namespace hyperadapters

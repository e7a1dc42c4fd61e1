#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "hyperadapters/rng.hpp"

namespace hyperadapters {

using LangId = int;

enum class Side { Encoder, Decoder };

inline const char* side_name(Side s) { return s == Side::Encoder ? "enc" : "dec"; }

struct LanguagePair {
  LangId source = 0;
  LangId target = 0;
  auto operator<=>(const LanguagePair&) const = default;
};

/// One adapter site for one translation direction.
struct Route {
  LangId source = 0;
  LangId target = 0;
  Side side = Side::Encoder;
  int layer = 0;  // index within its side
  auto operator<=>(const Route&) const = default;
};

/// Encoder layers take ids [0, n_enc); decoder layers follow.
struct LayerLayout {
  int n_enc = 0;
  int n_dec = 0;
  int total() const { return n_enc + n_dec; }
  int id(Side side, int layer) const { return side == Side::Encoder ? layer : n_enc + layer; }
  int id(const Route& r) const { return id(r.side, r.layer); }
};

/// Token ids: 0 pad, 1 end-of-sentence, then one tag per language, then the
/// surface symbols shared by every language.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kFirstTag = 2;

  int n_languages = 0;
  int n_symbols = 0;

  int size() const { return kFirstTag + n_languages + n_symbols; }
  int tag(LangId lang) const { return kFirstTag + lang; }
  int symbol(int s) const { return kFirstTag + n_languages + s; }
  bool is_tag(int id) const { return id >= kFirstTag && id < kFirstTag + n_languages; }
  bool is_symbol(int id) const { return id >= kFirstTag + n_languages && id < size(); }
  int to_symbol(int id) const { return id - kFirstTag - n_languages; }
};

/// Training flag plus the dropout stream; a null rng means no dropout.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  bool dropout_active() const { return training && rng != nullptr; }
};

class RoutingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hyperadapters

#pragma once

#include <string>
#include <string_view>

namespace amelo {

/// One pass of the classic Porter stemmer. Words containing anything other
/// than lower-case ASCII letters are returned unchanged.
std::string porter_stem(std::string_view word);

/// Repeats porter_stem until the word stops changing, so the result is a
/// fixed point: stem_to_fixpoint(stem_to_fixpoint(w)) == stem_to_fixpoint(w).
std::string stem_to_fixpoint(std::string_view word);

}  // namespace amelo

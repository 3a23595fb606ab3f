#pragma once

#include <vector>

#include "cavscat/vec.hpp"

namespace cavscat::fft {

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// In-place radix-2 transform X_k = sum_n x_n e^{-2 pi i k n / N}
/// (`inverse` flips the sign and divides by N). Size must be a power of two.
void transform(std::vector<Complex>& data, bool inverse = false);

}  // namespace cavscat::fft

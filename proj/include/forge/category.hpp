#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace forge {

enum class Category : std::uint8_t {
  individual,
  mining,
  exchange,
  marketplace,
  gambling,
  bet,
  faucet,
  mixer,
  ponzi,
  ransomware,
  bridge,
};

inline constexpr std::array<Category, 11> kAllCategories{
    Category::individual, Category::mining, Category::exchange, Category::marketplace,
    Category::gambling,   Category::bet,    Category::faucet,   Category::mixer,
    Category::ponzi,      Category::ransomware, Category::bridge,
};

std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);

}  // namespace forge

#ifndef LOOKAHES_VERSION_HPP
#define LOOKAHES_VERSION_HPP

namespace lookahes {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace lookahes

#endif  // LOOKAHES_VERSION_HPP

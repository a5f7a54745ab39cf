#pragma once

#include <cmath>
#include <numbers>

namespace fairpoi {

inline constexpr double kEarthRadiusKm = 6371.0088;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Great-circle distance in kilometers.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double dlat = deg2rad(lat2 - lat1);
  const double dlon = deg2rad(lon2 - lon1);
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(deg2rad(lat1)) * std::cos(deg2rad(lat2)) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace fairpoi

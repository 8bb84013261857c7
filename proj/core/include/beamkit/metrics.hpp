#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace beamkit {

/// Upper bound reported by `si_sdr`, reached when the error is zero.
inline constexpr double kSiSdrCap = 60.0;

/// Scale-invariant SDR in dB, capped at kSiSdrCap. Throws InvalidArgument on
/// length mismatch or a zero-energy reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

/// Short-time objective intelligibility in [0, 1].
///
/// Operates at the input rate instead of resampling to 10 kHz: frames of
/// 25.6 ms with 50% overlap, 15 one-third-octave bands from 150 Hz, silent
/// frame removal at 40 dB dynamic range, 30-frame (384 ms) segments and
/// clipping at -15 dB SDR. Throws InvalidArgument when fewer than 30 frames
/// remain after silence removal.
double stoi(std::span<const double> estimate, std::span<const double> reference,
            int sample_rate);

struct UtteranceMetrics {
  std::string id;
  double si_sdr_db = 0.0;
  double stoi = 0.0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> utterances;

  double mean_si_sdr() const;
  double mean_stoi() const;

  /// id,si_sdr_db,stoi rows.
  void write_csv(const std::filesystem::path& path) const;
  /// Aggregate means plus count; PESQ is reported as not computed.
  void write_json(const std::filesystem::path& path) const;
};

}  // namespace beamkit

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "beamkit/room_sim.hpp"

namespace beamkit {

/// Speech-like test signal: voiced syllables with a speaker-specific pitch
/// range and moving formants, interleaved with fricative bursts and pauses.
/// Normalized to an RMS of 0.1.
Eigen::VectorXd synthetic_speech(std::uint64_t seed, std::size_t length, int sample_rate);

/// Independent pink (1/f) noise per channel, unit RMS per channel.
Eigen::MatrixXd pink_noise(std::uint64_t seed, int channels, std::size_t length);

/// Imposes the coherence of a spherically isotropic (diffuse) sound field,
/// sinc(2 pi f d_ij / c), on independent equal-spectrum channels, one per
/// mic. Mixing happens per STFT bin (512-sample sqrt-Hann frames).
Eigen::MatrixXd diffuse_field(const Eigen::MatrixXd& independent, const std::vector<Vec3>& mics,
                              int sample_rate, double speed_of_sound = kSpeedOfSound);

/// Sorted list of *.wav files directly inside `dir`.
std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& dir);

/// Picks a file from `files` by `seed`, reads channel 0 and loops or crops
/// it to `length` samples. Throws if the sample rate differs.
Eigen::VectorXd corpus_excerpt(const std::vector<std::filesystem::path>& files,
                               std::uint64_t seed, std::size_t length, int sample_rate);

}  // namespace beamkit

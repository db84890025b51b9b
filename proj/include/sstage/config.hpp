#pragma once

#include <istream>
#include <string>

#include "sstage/trainer.hpp"

namespace sstage {

// Flat key=value config. Recognized keys: learning_rate, epochs, modes
// (comma-separated list), seed, dataset_root, test_set, optimizer,
// dropout_rate, val_fraction. '#' starts a comment; unknown keys are errors.
TrainConfig parse_train_config(std::istream& in);
TrainConfig parse_train_config_file(const std::string& path);

std::vector<int> parse_mode_list(const std::string& s);

}  // namespace sstage

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "kandu/config.hpp"

namespace kandu::cli {

/// Subcommands. Each returns the process exit status and reports failures
/// on `err`.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::ostream& out, std::ostream& err);
int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses `kandu <command> [--config FILE] [--key value ...]` and
/// dispatches. Flags override values read from the config file.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Metrics CSV columns written by train.
inline constexpr const char* kTrainCsvHeader = "epoch,main_lr,aux_lr,train_loss,val_iou,val_dice";

}  // namespace kandu::cli

#ifndef COGEST_SRC_CLI_COMMON_HPP_
#define COGEST_SRC_CLI_COMMON_HPP_

#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "cogest/audio/features.hpp"
#include "cogest/cli/commands.hpp"
#include "cogest/data/standardizer.hpp"
#include "cogest/text/tokenizer.hpp"

namespace cogest::cli::detail {

nlohmann::json read_json(const fs::path& p);
void write_json(const fs::path& p, const nlohmann::json& j);

/// Throws DependencyError naming `what` when `p` is missing.
fs::path require_file(const fs::path& p, const std::string& what);

data::Standardizer load_stats(const fs::path& p);
text::Vocabulary load_vocab(const fs::path& p);

const audio::LogMelProvider& mel();

/// Prepared corpus in model space.
struct Corpus {
  text::Vocabulary vocab;
  data::Standardizer stats;
  std::unique_ptr<data::ClipDirExampleSet> items;
};
/// `stats` defaults to the corpus' own stats.json.
Corpus load_corpus(const fs::path& dir, int frames, const std::optional<data::Standardizer>& stats = std::nullopt,
                   const std::optional<text::Vocabulary>& vocab = std::nullopt);

/// Hashes of the known checkpoints present in `dir`, keyed by file name.
std::map<std::string, std::string> checkpoint_hashes(const fs::path& dir);

/// Appends "phase,step,loss" rows.
class LossLog {
 public:
  LossLog(const fs::path& p, bool append);
  void add(const std::string& phase, long step, double loss);

 private:
  std::unique_ptr<std::ofstream> out_;
};

}  // namespace cogest::cli::detail

#endif  // COGEST_SRC_CLI_COMMON_HPP_

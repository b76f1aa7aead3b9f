#ifndef POCUS_PLOT_HPP
#define POCUS_PLOT_HPP

#include <string>
#include <vector>

namespace pocus {

// Renders accuracy.png, loss.png and learning_rate.png from a training
// history file, plus curves_data.csv with the exact numbers plotted.
// Returns the paths written.
std::vector<std::string> plot_curves(const std::string& history_path, const std::string& out_dir);

}  // namespace pocus

#endif  // POCUS_PLOT_HPP

// Writes the syntax graph of a Python file as JSON for the offline oracles.
#include "sage/ast_features.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: dump_graph FILE\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto graph = sage::features::parse_to_graph(buffer.str());
  nlohmann::json doc;
  doc["root"] = graph.root_id;
  for (const auto& node : graph.nodes) doc["kinds"].push_back(node.kind);
  doc["edges"] = graph.edges;
  std::cout << doc.dump() << '\n';
}

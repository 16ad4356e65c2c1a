"""Independent oracle for the golden feature file.

Graph metrics are recomputed with networkx from the edge list produced by
dump_graph; complexity values come from Python's own ast and tokenize
modules with the McCabe rule set applied by hand.

usage: python3 feature_oracle.py DUMP_GRAPH_BINARY SOURCE.py > golden.json
"""
import ast
import io
import json
import math
import subprocess
import sys
import tokenize
from collections import Counter

import networkx as nx
import numpy as np


def graph_metrics(dump):
    g = nx.Graph()
    n = len(dump["kinds"])
    g.add_nodes_from(range(n))
    g.add_edges_from(dump["edges"])
    children = {v: [] for v in range(n)}
    for p, c in dump["edges"]:
        children[p].append(c)
    deg = np.array([d for _, d in sorted(g.degree())], dtype=float)
    hist = Counter(deg.tolist())
    probs = np.array([c / n for c in hist.values()])
    entropy = float(-(probs * np.log2(probs)).sum()) if len(hist) > 1 else 0.0
    depth = nx.single_source_shortest_path_length(g, dump["root"])
    leaf_depths = [depth[v] for v in range(n) if not children[v]]
    return {
        "node_count": n,
        "edge_count": g.number_of_edges(),
        "degree_mean": float(deg.mean()),
        "degree_variance": float(deg.var()),
        "degree_entropy": entropy,
        "max_degree": float(deg.max()),
        "depth_min": min(leaf_depths),
        "depth_mean": float(np.mean(leaf_depths)),
        "depth_max": max(leaf_depths),
        "avg_clustering": nx.average_clustering(g),
        "degree_assortativity": nx.degree_assortativity_coefficient(g),
        "diameter": nx.diameter(g),
        "avg_shortest_path": nx.average_shortest_path_length(g),
    }


DECISIONS = (ast.If, ast.IfExp, ast.For, ast.AsyncFor, ast.While,
             ast.ExceptHandler, ast.Assert, ast.match_case)


def cyclomatic(fn):
    count = 1
    stack = list(ast.iter_child_nodes(fn))
    while stack:
        node = stack.pop()
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            continue
        if isinstance(node, DECISIONS):
            count += 1  # elif is a nested If in Python's ast
        elif isinstance(node, ast.BoolOp):
            count += len(node.values) - 1
        elif isinstance(node, ast.comprehension):
            count += len(node.ifs)
        stack.extend(ast.iter_child_nodes(node))
    return count


def tokens_in(source, fn):
    skip = {tokenize.NEWLINE, tokenize.NL, tokenize.INDENT, tokenize.DEDENT,
            tokenize.COMMENT, tokenize.ENDMARKER}
    start = (fn.lineno, fn.col_offset)
    end = (fn.end_lineno, fn.end_col_offset)
    count = 0
    for tok in tokenize.generate_tokens(io.StringIO(source).readline):
        if tok.type in skip:
            continue
        if start <= tok.start and tok.end <= end:
            count += 1
    return count


def parameters(fn):
    a = fn.args
    return (len(a.posonlyargs) + len(a.args) + len(a.kwonlyargs)
            + (a.vararg is not None) + (a.kwarg is not None))


def complexity(source):
    tree = ast.parse(source)
    fns = [n for n in ast.walk(tree) if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    cc = [cyclomatic(f) for f in fns]
    tk = [tokens_in(source, f) for f in fns]
    pc = [parameters(f) for f in fns]
    k = len(fns)
    mean = lambda xs: sum(xs) / k if k else 0.0
    return {
        "function_count": k,
        "total_cyclomatic_complexity": sum(cc),
        "mean_cyclomatic_complexity": mean(cc),
        "max_cyclomatic_complexity": max(cc, default=0),
        "total_token_count": sum(tk),
        "mean_token_count": mean(tk),
        "total_parameter_count": sum(pc),
        "mean_parameter_count": mean(pc),
        "max_parameter_count": max(pc, default=0),
    }


def main():
    binary, path = sys.argv[1], sys.argv[2]
    source = open(path).read()
    dump = json.loads(subprocess.check_output([binary, path]))
    out = graph_metrics(dump)
    out.update(complexity(source))
    json.dump(out, sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main()

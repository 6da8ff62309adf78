"""Pushdown automata compiled into tensor recurrent networks with a differentiable stack."""

from nnpda.automata import PdaSpec, StackOp, run_classical, validate_spec
from nnpda.grammars import builtin, gen_corpus, parse_spec, parse_spec_file
from nnpda.network import nn_classify, nn_run, nn_step, nn_trace
from nnpda.tensors import WeightTensors, encode_weights, extract_rules, weight_counts

__all__ = [
    "PdaSpec",
    "StackOp",
    "WeightTensors",
    "builtin",
    "encode_weights",
    "extract_rules",
    "gen_corpus",
    "nn_classify",
    "nn_run",
    "nn_step",
    "nn_trace",
    "parse_spec",
    "parse_spec_file",
    "run_classical",
    "validate_spec",
    "weight_counts",
]

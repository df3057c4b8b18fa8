"""Parameter and multiply-accumulate accounting for the attention modules.

Two bases are reported for parameters:

* the documented basis, matching the closed-form expressions below exactly
  (spatial attention: channel compression + gating convolution + two-layer
  feed-forward; per-encoder: attention projections and feed-forward with
  biases, normalization affine parameters excluded);
* the full framework count, including normalization parameters and the
  layers outside the documented expressions (recovery and spatial
  compression linears, output head, SRCNN, interpolation buffers carry no
  parameters).
"""

from __future__ import annotations

import ast
import operator

from torch import nn

from .model import DceNet, DceNetConfig

SA_PARAMS_FORMULA = "(2*n_s*n_c)*d + 2*d*d_ff + d_ff + 2*d + 99"
TFA_PARAMS_PER_ENCODER_FORMULA = "4*d**2 + 5*d + 2*d*d_ff + d_ff"
SA_MACS_FORMULA = "2*n_r*n_t*(d*n_s*n_c + d*d_ff + 49)"
TFA_MACS_FORMULA = "2*L*(2*d**2 + L*d + d*d_ff)"

ATTENTION_CONV_PARAMS = 99  # Conv2d(2, 1, 7, padding 3) with bias

_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Pow: operator.pow,
}


def eval_formula(formula: str, variables: dict[str, int]) -> int:
    """Evaluate an arithmetic formula over named integer variables.

    Only +, -, *, ** on names and integer literals are accepted, so the
    documented expressions stay data rather than code.
    """

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise KeyError(f"formula variable {node.id!r} not supplied")
            return variables[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            return _BIN_OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        raise ValueError(f"unsupported syntax in formula: {ast.dump(node)}")

    return int(walk(ast.parse(formula, mode="eval")))


def formula_variables(cfg: DceNetConfig) -> dict[str, int]:
    return {
        "d": cfg.d,
        "d_ff": cfg.d_ff,
        "n_s": cfg.n_symbols,
        "n_c": cfg.n_subcarriers,
        "n_r": cfg.n_rx,
        "n_t": cfg.n_tx,
        "L": cfg.seq_len,
    }


def _module_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def count_params(model: DceNet) -> dict[str, int]:
    """Per-module parameter counts, documented basis and full."""
    cfg = model.cfg
    sa_conv = sum(_module_params(block.conv) for block in model.sa_blocks)
    sa_documented = _module_params(model.compress) + _module_params(model.ffn) + sa_conv

    encoder = model.encoders[0]
    norm_params = _module_params(encoder.norm1) + _module_params(encoder.norm2)
    tfa_per_encoder_full = _module_params(encoder)
    tfa_per_encoder_documented = tfa_per_encoder_full - norm_params

    counts = {
        "sa_documented": sa_documented,
        "sa_conv": sa_conv,
        "sa_full": sa_documented + _module_params(model.recover),
        "tfa_per_encoder_documented": tfa_per_encoder_documented,
        "tfa_per_encoder_full": tfa_per_encoder_full,
        "tfa_full": sum(_module_params(e) for e in model.encoders)
        + _module_params(model.spatial_compress),
        "srcnn": _module_params(model.srcnn),
        "head": _module_params(model.head),
        "total": _module_params(model),
    }
    variables = formula_variables(cfg)
    counts["sa_formula"] = eval_formula(SA_PARAMS_FORMULA, variables)
    counts["tfa_per_encoder_formula"] = eval_formula(
        TFA_PARAMS_PER_ENCODER_FORMULA, variables
    )
    return counts


def estimate_macs(cfg: DceNetConfig) -> dict[str, int]:
    """Multiply-accumulate counts per batch for the attention modules."""
    variables = formula_variables(cfg)
    sa = eval_formula(SA_MACS_FORMULA, variables)
    tfa_per_encoder = eval_formula(TFA_MACS_FORMULA, variables)
    return {
        "sa": sa,
        "tfa_per_encoder": tfa_per_encoder,
        "tfa_total": cfg.n_encoders * tfa_per_encoder,
    }

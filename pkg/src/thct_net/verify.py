"""
Verification Harness

Kernel oracle suites, per-layer and whole-model gradient checks, and
structural checks. Every suite yields one SuiteResult; the CLI turns a
failing report into exit code 3.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from thct_net import oracles
from thct_net.config import ModelConfig
from thct_net.data.preprocess import motion_difference
from thct_net.exceptions import UsageError
from thct_net.models.cnn_stream import CnnStream
from thct_net.models.thct import THCTNet
from thct_net.models.transformer_stream import (
    AttentionBlock,
    TransformerStream,
    WindowSpec,
    positional_encoding,
    tokenize,
)
from thct_net.nn import BatchNormLayer, Conv2DLayer, Conv3DLayer, LinearLayer, gap
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor, inject_fault, no_grad
from thct_net.tensor.gradcheck import GradCheckReport, grad_check


logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 1e-5
GRAD_TOLERANCE = 1e-4
GRAD_STEP = 1e-3
ORACLE_CASES = 10
MODEL_MAX_ENTRIES = 12
MODEL_BATCH = 2


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    detail: str = ""

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status}  {self.name:<28} max error {self.max_error:.3e}"
        return f"{line}  ({self.detail})" if self.detail else line


@dataclass
class VerificationReport:
    results: List[SuiteResult] = field(default_factory=list)
    fault: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[SuiteResult]:
        return [r for r in self.results if not r.passed]

    def __getitem__(self, name: str) -> SuiteResult:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)


def verify_config() -> ModelConfig:
    """Micro model on a tiny geometry: U = 4 tokens, 2 classes, float64."""
    return replace(
        ModelConfig.micro(),
        frames=8, joints=5, entities=2, window=(2, 5, 2),
        num_classes=2, precision="float64",
    )


def _param(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def _projection(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    """Scalar readout sum(out * r) with r fixed per suite."""
    weights = Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    return lambda t: ops.sum(ops.mul(t, weights))


# ----------------------------------------------------------------------
# Oracle suites
# ----------------------------------------------------------------------

def matmul_oracle_suite(seed: int = 0, cases: int = ORACLE_CASES) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        batch = tuple(int(b) for b in rng.integers(1, 3, size=rng.integers(0, 3)))
        m, k, n = (int(v) for v in rng.integers(1, 7, size=3))
        a = rng.standard_normal(batch + (m, k))
        b = rng.standard_normal(batch + (k, n))
        got = ops.matmul(Tensor(a), Tensor(b)).numpy()
        worst = max(worst, float(np.max(np.abs(got - oracles.matmul_naive(a, b)))))
    return SuiteResult("oracle.matmul", worst < ORACLE_TOLERANCE, worst, f"{cases} shapes")


def conv_oracle_suite(spatial_dims: int, seed: int = 0, cases: int = ORACLE_CASES) -> SuiteResult:
    rng = np.random.default_rng(seed + spatial_dims)
    worst = 0.0
    for _ in range(cases):
        kernel = tuple(int(k) for k in rng.integers(1, 4, size=spatial_dims))
        stride = tuple(int(s) for s in rng.integers(1, 3, size=spatial_dims))
        padding = tuple(int(rng.integers(0, k)) for k in kernel)
        spatial = tuple(int(k + rng.integers(0, 4)) for k in kernel)
        n, c_in, c_out = (int(v) for v in rng.integers(1, 4, size=3))
        x = rng.standard_normal((n, c_in) + spatial)
        w = rng.standard_normal((c_out, c_in) + kernel)
        b = rng.standard_normal(c_out)
        got = ops.conv_nd(Tensor(x), Tensor(w), Tensor(b), stride, padding).numpy()
        want = oracles.conv_direct(x, w, b, stride, padding)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return SuiteResult(f"oracle.conv{spatial_dims}d", worst < ORACLE_TOLERANCE, worst, f"{cases} shapes")


def _naive_block_output(block: AttentionBlock, tokens: np.ndarray) -> np.ndarray:
    d = block.channels
    hq = block.heads * block.qkv_channels
    return oracles.attention_block_naive(
        tokens,
        positional_encoding(block.tokens, d),
        block.q_proj.weight.numpy().reshape(hq, d), block.q_proj.bias.numpy(),
        block.k_proj.weight.numpy().reshape(hq, d), block.k_proj.bias.numpy(),
        block.A.numpy(), float(block.alpha.item()),
        block.ffn.weight.numpy().reshape(d, d), block.ffn.bias.numpy(),
        block.heads, block.score_width,
    )


def attention_oracle_suite(seed: int = 0, cases: int = ORACLE_CASES) -> SuiteResult:
    rng = np.random.default_rng(seed + 100)
    worst = 0.0
    for _ in range(cases):
        heads = int(rng.integers(1, 3))
        d = 2 * heads * int(rng.integers(1, 3))
        cq = int(rng.integers(1, 4))
        grid = (int(rng.integers(1, 4)), int(rng.integers(1, 3)), 1)
        window = WindowSpec(int(rng.integers(1, 4)), 1, int(rng.integers(1, 3)))
        block = AttentionBlock(d, heads, cq, grid, window, rng, np.float64)
        block.A.data[...] = 0.1 * rng.standard_normal(block.A.shape)
        block.alpha.data[...] = rng.uniform(0.5, 1.5)
        tokens = rng.standard_normal((block.tokens, d))
        with no_grad():
            got = block.forward_tokens(Tensor(tokens)).numpy()
        worst = max(worst, float(np.max(np.abs(got - _naive_block_output(block, tokens)))))
    return SuiteResult("oracle.attention", worst < ORACLE_TOLERANCE, worst, f"{cases} shapes")


# ----------------------------------------------------------------------
# Gradient checks
# ----------------------------------------------------------------------

def _grad_suite(
    name: str,
    f: Callable[[], Tensor],
    params,
    max_entries: Optional[int] = None,
    scope: str = "",
) -> SuiteResult:
    report: GradCheckReport = grad_check(f, params, h=GRAD_STEP, tol=GRAD_TOLERANCE, max_entries=max_entries)
    detail = scope
    if not report.passed:
        worst = max(report.failures(), key=lambda c: c.max_relative_error)
        if detail:
            detail += "; "
        detail += f"worst '{worst.name}' at {worst.worst_index}: analytic {worst.analytic:.6g}, numeric {worst.numeric:.6g}"
    return SuiteResult(f"grad.{name}", report.passed, report.max_relative_error, detail)


def _layer_problems(seed: int) -> Dict[str, Tuple[Callable[[], Tensor], list]]:
    """name -> (scalar function, named leaf tensors) for each layer type."""
    rng = np.random.default_rng(seed + 200)
    problems = {}

    linear = LinearLayer(6, 4, rng=rng, dtype=np.float64)
    x_lin = _param(rng, 3, 6)
    read = _projection(linear(x_lin), rng)
    problems["linear"] = (lambda: read(linear(x_lin)),
                          [("weight", linear.weight), ("bias", linear.bias), ("x", x_lin)])

    conv2 = Conv2DLayer(2, 3, 3, stride=(1, 2), padding=1, rng=rng, dtype=np.float64)
    x_c2 = _param(rng, 2, 2, 5, 6)
    read_c2 = _projection(conv2(x_c2), rng)
    problems["conv2d"] = (lambda: read_c2(conv2(x_c2)),
                          [("weight", conv2.weight), ("bias", conv2.bias), ("x", x_c2)])

    conv3 = Conv3DLayer(2, 3, (3, 1, 2), padding=(1, 0, 0), rng=rng, dtype=np.float64)
    x_c3 = _param(rng, 2, 2, 4, 3, 2)
    read_c3 = _projection(conv3(x_c3), rng)
    problems["conv3d"] = (lambda: read_c3(conv3(x_c3)),
                          [("weight", conv3.weight), ("bias", conv3.bias), ("x", x_c3)])

    norm = BatchNormLayer(3, dtype=np.float64)
    norm.gamma.data[...] = rng.uniform(0.5, 1.5, 3)
    norm.beta.data[...] = rng.standard_normal(3)
    x_bn = _param(rng, 4, 3, 2, 2)
    read_bn = _projection(norm(x_bn), rng)
    problems["batchnorm"] = (lambda: read_bn(norm(x_bn)),
                             [("gamma", norm.gamma), ("beta", norm.beta), ("x", x_bn)])

    a_mm, b_mm = _param(rng, 2, 3, 4), _param(rng, 2, 4, 5)
    read_mm = _projection(ops.matmul(a_mm, b_mm), rng)
    problems["matmul"] = (lambda: read_mm(ops.matmul(a_mm, b_mm)), [("a", a_mm), ("b", b_mm)])

    p, q, r = _param(rng, 3, 4), _param(rng, 3, 4), _param(rng, 3, 4)

    def elementwise():
        mixed = ops.sub(ops.mul(p, q), ops.scale(r, 0.7))
        return ops.add(ops.relu(mixed), ops.tanh(ops.add(p, 0.3)))

    read_el = _projection(elementwise(), rng)
    problems["elementwise"] = (lambda: read_el(elementwise()), [("p", p), ("q", q), ("r", r)])

    s, t = _param(rng, 2, 3, 4), _param(rng, 2, 1, 4)

    def shapes():
        joined = ops.concat([s, ops.broadcast_to(t, (2, 2, 4))], axis=1)
        moved = ops.reshape(ops.permute(joined, (2, 0, 1)), (4, 10))
        return ops.mean(ops.slice_axis(moved, 1, 1, 9), axis=0)

    read_sh = _projection(shapes(), rng)
    problems["permute_concat"] = (lambda: read_sh(shapes()), [("s", s), ("t", t)])

    x_gap = _param(rng, 2, 3, 4, 5)
    read_gap = _projection(gap(x_gap), rng)
    problems["gap"] = (lambda: read_gap(gap(x_gap)), [("x", x_gap)])

    block = AttentionBlock(4, 2, 2, (2, 2, 1), WindowSpec(2, 1, 1), rng, np.float64)
    block.A.data[...] = 0.1 * rng.standard_normal(block.A.shape)
    x_att = _param(rng, 2, 4, 2, 2, 1)
    read_att = _projection(block(x_att), rng)
    problems["attention"] = (lambda: read_att(block(x_att)),
                             list(block.named_parameters()) + [("x", x_att)])

    logits = _param(rng, 4, 5)
    targets = rng.integers(0, 5, size=4)
    problems["cross_entropy"] = (
        lambda: ops.cross_entropy_smoothed(logits, targets, 0.1, 0.7), [("logits", logits)]
    )
    return problems


def layer_grad_checks(seed: int = 0) -> List[SuiteResult]:
    return [_grad_suite(name, f, params) for name, (f, params) in _layer_problems(seed).items()]


def _model_inputs(config: ModelConfig, rng: np.random.Generator):
    coords = rng.standard_normal((MODEL_BATCH, 3, config.frames, config.joints, config.entities))
    motion = np.stack([motion_difference(c) for c in coords])
    labels = np.arange(MODEL_BATCH) % config.num_classes
    return Tensor(coords, dtype=np.float64), Tensor(motion, dtype=np.float64), labels


def model_check_scope(config: ModelConfig, max_entries: int) -> str:
    """Reduced geometry and sampling used by the whole-model checks, for the report."""
    return (
        f"reduced geometry T={config.frames} V={config.joints} M={config.entities} "
        f"window {config.window}, up to {max_entries} entries per tensor"
    )


def model_grad_checks(seed: int = 0, max_entries: int = MODEL_MAX_ENTRIES) -> List[SuiteResult]:
    config = verify_config()
    scope = model_check_scope(config, max_entries)
    rng = np.random.default_rng(seed + 300)
    coords, motion, labels = _model_inputs(config, rng)

    def ce(logits: Tensor) -> Tensor:
        return ops.cross_entropy_smoothed(logits, labels, config.label_smoothing, config.temperature)

    transformer = TransformerStream(config, rng)
    cnn = CnnStream(config, rng)
    model = THCTNet(config, rng)

    def two_stream() -> Tensor:
        out = model(coords, motion)
        return ops.add(ce(out.transformer), ce(out.cnn))

    return [
        _grad_suite("transformer_stream", lambda: ce(transformer(coords)),
                    list(transformer.named_parameters()), max_entries, scope),
        _grad_suite("cnn_stream", lambda: ce(cnn(coords, motion)),
                    list(cnn.named_parameters()), max_entries, scope),
        _grad_suite("two_stream", two_stream, list(model.named_parameters()), max_entries, scope),
    ]


# ----------------------------------------------------------------------
# Structural checks
# ----------------------------------------------------------------------

def structure_checks(seed: int = 0) -> List[SuiteResult]:
    rng = np.random.default_rng(seed + 400)
    results = []

    full = ModelConfig.full()
    sample = rng.standard_normal((3, full.frames, full.joints, full.entities))
    tokens, _ = tokenize(sample, WindowSpec(*full.window))
    count = tokens.shape[0]
    results.append(SuiteResult(
        "structure.token_count", count == full.token_count == 75, float(abs(count - 75)),
        f"U = {count} for window {full.window}",
    ))

    block = AttentionBlock(4, 2, 2, (3, 1, 1), WindowSpec(2, 1, 1), rng, np.float64)
    x = Tensor(rng.standard_normal((2, 4, 3, 1, 1)), dtype=np.float64)
    block.alpha.data[...] = 0.0
    with no_grad():
        block.A.data[...] = 0.0
        zero = block.attend(block.attention_scores(x), x).numpy()
        block.A.data[...] = np.eye(block.tokens)
        identity = block.attend(block.attention_scores(x), x).numpy()
    zero_err = float(np.max(np.abs(zero)))
    ident_err = float(np.max(np.abs(identity - x.numpy())))
    results.append(SuiteResult("structure.zero_attention", zero_err == 0.0, zero_err))
    results.append(SuiteResult("structure.identity_attention", ident_err == 0.0, ident_err))

    static = np.repeat(rng.standard_normal((3, 1, 25, 2)), 12, axis=1)
    motion = motion_difference(static)
    loop = oracles.motion_difference_loop(static)
    motion_err = max(float(np.max(np.abs(motion))), float(np.max(np.abs(loop))))
    results.append(SuiteResult("structure.static_motion", motion_err == 0.0, motion_err))
    return results


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------

def run_verification(
    seed: int = 0,
    fault: Optional[str] = None,
    progress: Optional[Callable[[SuiteResult], None]] = None,
) -> VerificationReport:
    """
    Run every suite. With `fault` set, the backward rule of that op kind is
    corrupted for the gradient checks, which must then fail.

    Raises:
        UsageError: If `fault` is not a known op kind.
    """
    if fault is not None and fault not in ops.OP_KINDS:
        raise UsageError(f"Unknown op '{fault}' for fault injection; choose from {', '.join(ops.OP_KINDS)}")

    report = VerificationReport(fault=fault)

    def record(result: SuiteResult) -> None:
        report.results.append(result)
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, result.format())
        if progress is not None:
            progress(result)

    for suite in (
        lambda: matmul_oracle_suite(seed),
        lambda: conv_oracle_suite(2, seed),
        lambda: conv_oracle_suite(3, seed),
        lambda: attention_oracle_suite(seed),
    ):
        record(suite())

    if fault is not None:
        with inject_fault(fault):
            grads = layer_grad_checks(seed) + model_grad_checks(seed)
    else:
        grads = layer_grad_checks(seed) + model_grad_checks(seed)
    for result in grads:
        record(result)

    for result in structure_checks(seed):
        record(result)
    return report

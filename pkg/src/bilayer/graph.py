"""Teacher-forced pass through the decoding schedule, with exact gradients.

Training unrolls the same instance -> subject -> labels -> object -> predicate
schedule the decoder walks, but injects ground-truth (or deliberately
substituted) indices at every commitment instead of sampled ones.  Each batch
element is one statement; heads active per mode and arity:

    episodic   unary   subject CE + one family CE
    episodic   binary  subject CE + object CE + predicate CE
    semantic   unary   family CE                      (subject given, pooled instance)
    semantic   binary  object CE + predicate CE
    perception unary   instance CE + subject CE + family CE
    perception binary  instance CE + subject CE + object CE + predicate CE

The backward pass is derived by hand for this fixed graph; tests check it
against 64-bit central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import NumericsError, sigmoid
from .params import ColumnMap, NetParams

MODES = ("episodic", "semantic", "perception")
ARITIES = ("unary", "binary")


class GraphError(ValueError):
    pass


@dataclass
class Batch:
    """One homogeneous group of teacher-forced examples (same mode and arity).

    All index fields hold embedding column positions; targets are resolved to
    positions inside the relevant readout support during the forward pass.
    """

    mode: str
    arity: str
    inst_cols: np.ndarray | None = None      # (B,) perception/episodic
    subj_inject_cols: np.ndarray | None = None  # (B,)
    fam_rows: dict[str, np.ndarray] = field(default_factory=dict)
    fam_target_cols: dict[str, np.ndarray] = field(default_factory=dict)
    obj_inject_cols: np.ndarray | None = None
    pred_cols: np.ndarray | None = None
    feat_scene: np.ndarray | None = None     # (B, feature_dim)
    feat_subj: np.ndarray | None = None
    feat_obj: np.ndarray | None = None
    feat_pred: np.ndarray | None = None
    direct: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise GraphError(f"unknown mode {self.mode!r}")
        if self.arity not in ARITIES:
            raise GraphError(f"unknown arity {self.arity!r}")
        if self.direct and self.mode != "perception":
            raise GraphError("direct graphs are a perception variant")
        if self.mode == "perception":
            needed = [self.feat_scene, self.feat_subj]
            if self.arity == "binary":
                needed += [self.feat_obj, self.feat_pred]
            if any(f is None for f in needed):
                raise GraphError("perception batches need feature inputs")
        if self.mode != "semantic" and self.inst_cols is None:
            raise GraphError(f"{self.mode} batches need instance columns")

    def __len__(self) -> int:
        if self.subj_inject_cols is not None:
            return int(self.subj_inject_cols.shape[0])
        return int(self.inst_cols.shape[0])


def _ce_head(scores: np.ndarray, target_pos: np.ndarray, inv_b: float) -> dict:
    """Row-wise softmax cross-entropy; returns probs, summed loss, dscores."""
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    probs = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(scores.shape[0])
    picked = probs[rows, target_pos]
    loss = float(-np.log(np.maximum(picked, 1e-300)).sum() * inv_b)
    dscores = probs.copy()
    dscores[rows, target_pos] -= 1.0
    dscores *= inv_b
    acc = float((scores.argmax(axis=1) == target_pos).mean())
    return {
        "scores": scores,
        "probs": probs,
        "targets": target_pos,
        "loss": loss,
        "dscores": dscores,
        "accuracy": acc,
    }


def forward(
    params: NetParams,
    cmap: ColumnMap,
    batch: Batch,
    dropout: float = 0.0,
    drop_rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Run the teacher-forced graph; cache everything backward() needs.

    `dropout` masks context-state units (inverted scaling); it needs a
    generator and only applies to the recurrent path, so the direct variant
    ignores it.
    """
    b = len(batch)
    if b == 0:
        raise GraphError("empty batch")
    if not 0.0 <= dropout < 1.0:
        raise GraphError("dropout must be in [0, 1)")
    if dropout > 0.0 and drop_rng is None:
        raise GraphError("dropout needs a generator")
    inv_b = 1.0 / b
    dt = params.emb.dtype
    read = params.readout
    r_cpt = read[:, cmap.concept_cols]
    cache: dict = {"heads": {}, "fam_heads": {}, "batch": batch}
    heads = cache["heads"]

    def drop(state: np.ndarray, tag: str) -> np.ndarray:
        if dropout == 0.0:
            return state
        mask = (drop_rng.random(size=state.shape) >= dropout).astype(dt)
        mask /= np.asarray(1.0 - dropout, dtype=dt)
        cache["raw_" + tag] = state
        cache["mask_" + tag] = mask
        return state * mask

    def enc(feats: np.ndarray) -> np.ndarray:
        return feats.astype(dt) @ params.enc_w.T + params.enc_b

    if batch.direct:
        return _forward_direct(params, cmap, batch, cache, inv_b)

    perceiving = batch.mode == "perception"

    # instance step
    if perceiving:
        qt_tilde = enc(batch.feat_scene)
        zt_tilde = sigmoid(qt_tilde)
        heads["NT"] = _ce_head(
            zt_tilde @ read[:, cmap.instance_cols],
            cmap.instance_pos(batch.inst_cols),
            inv_b,
        )
        qt = qt_tilde + params.emb[:, batch.inst_cols].T
        cache["zt_tilde"] = zt_tilde
    elif batch.mode == "episodic":
        qt = params.emb[:, batch.inst_cols].T.copy()
    else:
        qt = np.broadcast_to(params.pooled, (b, params.config.rep_dim)).astype(dt)
    zt = sigmoid(qt)

    # context after the instance step; sig(0) of the initial context is 0.5
    m1 = 0.5 + zt @ params.ctx_in.T
    z1 = sigmoid(m1)
    h1 = z1 @ params.ctx_rec.T
    sh1 = drop(sigmoid(h1), "sh1")
    g1 = sh1 @ params.ctx_out.T

    # subject step
    qs_tilde = g1 + (enc(batch.feat_subj) if perceiving else 0.0)
    zs_tilde = sigmoid(qs_tilde)
    if batch.mode != "semantic":
        heads["NS"] = _ce_head(
            zs_tilde @ r_cpt, cmap.concept_pos(batch.subj_inject_cols), inv_b
        )
    qs = qs_tilde + params.emb[:, batch.subj_inject_cols].T
    zs = sigmoid(qs)

    if batch.arity == "unary":
        for fam in sorted(batch.fam_rows):
            rows = batch.fam_rows[fam]
            fcols = cmap.family_cols[fam]
            scores = zs[rows] @ read[:, fcols]
            pos_in_fam = np.searchsorted(fcols, batch.fam_target_cols[fam])
            cache["fam_heads"][fam] = _ce_head(scores, pos_in_fam, inv_b)
    else:
        m2 = sh1 + zs @ params.ctx_in.T
        z2 = sigmoid(m2)
        h2 = z2 @ params.ctx_rec.T
        sh2 = drop(sigmoid(h2), "sh2")
        g2 = sh2 @ params.ctx_out.T
        qo_tilde = g2 + (enc(batch.feat_obj) if perceiving else 0.0)
        zo_tilde = sigmoid(qo_tilde)
        heads["NO"] = _ce_head(
            zo_tilde @ r_cpt, cmap.concept_pos(batch.obj_inject_cols), inv_b
        )
        qo = qo_tilde + params.emb[:, batch.obj_inject_cols].T
        zo = sigmoid(qo)
        m3 = sh2 + zo @ params.ctx_in.T
        z3 = sigmoid(m3)
        h3 = z3 @ params.ctx_rec.T
        sh3 = drop(sigmoid(h3), "sh3")
        g3 = sh3 @ params.ctx_out.T
        qp = g3 + (enc(batch.feat_pred) if perceiving else 0.0)
        zp = sigmoid(qp)
        heads["NP"] = _ce_head(
            zp @ read[:, cmap.predicate_cols],
            cmap.predicate_pos(batch.pred_cols),
            inv_b,
        )
        cache.update(
            m2=m2, z2=z2, h2=h2, sh2=sh2, zo_tilde=zo_tilde, zo=zo,
            m3=m3, z3=z3, h3=h3, sh3=sh3, zp=zp,
        )

    cache.update(zt=zt, m1=m1, z1=z1, h1=h1, sh1=sh1, zs_tilde=zs_tilde, zs=zs)
    loss = _total_loss(cache)
    if not np.isfinite(loss):
        _name_nonfinite(cache)
    cache["loss"] = loss
    return loss, cache


def _forward_direct(params, cmap, batch, cache, inv_b) -> tuple[float, dict]:
    dt = params.emb.dtype
    read = params.readout
    heads = cache["heads"]

    def enc(feats):
        return feats.astype(dt) @ params.enc_w.T + params.enc_b

    zt = sigmoid(enc(batch.feat_scene))
    zs = sigmoid(enc(batch.feat_subj))
    heads["NT"] = _ce_head(
        zt @ read[:, cmap.instance_cols], cmap.instance_pos(batch.inst_cols), inv_b
    )
    heads["NS"] = _ce_head(
        zs @ read[:, cmap.concept_cols], cmap.concept_pos(batch.subj_inject_cols), inv_b
    )
    if batch.arity == "unary":
        for fam in sorted(batch.fam_rows):
            rows = batch.fam_rows[fam]
            fcols = cmap.family_cols[fam]
            pos_in_fam = np.searchsorted(fcols, batch.fam_target_cols[fam])
            cache["fam_heads"][fam] = _ce_head(zs[rows] @ read[:, fcols], pos_in_fam, inv_b)
    else:
        zo = sigmoid(enc(batch.feat_obj))
        zp = sigmoid(enc(batch.feat_pred))
        heads["NO"] = _ce_head(
            zo @ read[:, cmap.concept_cols], cmap.concept_pos(batch.obj_inject_cols), inv_b
        )
        heads["NP"] = _ce_head(
            zp @ read[:, cmap.predicate_cols], cmap.predicate_pos(batch.pred_cols), inv_b
        )
        cache.update(zo=zo, zp=zp)
    cache.update(zt=zt, zs=zs)
    loss = _total_loss(cache)
    if not np.isfinite(loss):
        _name_nonfinite(cache)
    cache["loss"] = loss
    return loss, cache


def _total_loss(cache: dict) -> float:
    loss = sum(h["loss"] for h in cache["heads"].values())
    loss += sum(h["loss"] for h in cache["fam_heads"].values())
    return float(loss)


def _name_nonfinite(cache: dict) -> None:
    for name, arr in cache.items():
        if isinstance(arr, np.ndarray) and not np.all(np.isfinite(arr)):
            raise NumericsError(f"non-finite values at graph node {name!r}")
    raise NumericsError("non-finite loss")


def mean_head_accuracy(cache: dict) -> float:
    accs = [h["accuracy"] for h in cache["heads"].values()]
    accs += [h["accuracy"] for h in cache["fam_heads"].values()]
    return float(np.mean(accs)) if accs else float("nan")


def zero_grads(params: NetParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.blocks().items()}


def backward(params: NetParams, cmap: ColumnMap, batch: Batch, cache: dict) -> dict[str, np.ndarray]:
    """Hand-derived reverse pass; returns gradients keyed like params.blocks()."""
    grads = zero_grads(params)
    d_emb = grads["emb"]
    d_read = grads["emb_up"] if not params.config.tied else d_emb
    read = params.readout
    heads = cache["heads"]
    perceiving = batch.mode == "perception"

    def head_into(name: str, z: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Backprop one CE head; returns dZ at its squashed input."""
        h = heads[name]
        d_read[:, cols] += z.T @ h["dscores"]
        return h["dscores"] @ read[:, cols].T

    def enc_grads(dq: np.ndarray, feats: np.ndarray) -> None:
        grads["enc_w"] += dq.T @ feats.astype(dq.dtype)
        grads["enc_b"] += dq.sum(axis=0)

    def through_drop(d_sh: np.ndarray, tag: str, sh: np.ndarray) -> np.ndarray:
        """Gradient across a (possibly dropout-masked) sigmoid context state."""
        mask = cache.get("mask_" + tag)
        raw = cache.get("raw_" + tag, sh)
        if mask is not None:
            d_sh = d_sh * mask
        return d_sh * raw * (1.0 - raw)

    if batch.direct:
        _backward_direct(params, cmap, batch, cache, grads, head_into, enc_grads)
        return grads

    zt, zs = cache["zt"], cache["zs"]
    zs_tilde = cache["zs_tilde"]
    sh1, z1, m1 = cache["sh1"], cache["z1"], cache["m1"]

    d_zs = np.zeros_like(zs)
    d_sh1 = np.zeros_like(sh1)

    if batch.arity == "unary":
        for fam in sorted(batch.fam_rows):
            h = cache["fam_heads"][fam]
            rows = batch.fam_rows[fam]
            fcols = cmap.family_cols[fam]
            d_read[:, fcols] += zs[rows].T @ h["dscores"]
            d_zs[rows] += h["dscores"] @ read[:, fcols].T
    else:
        zo, zo_tilde, zp = cache["zo"], cache["zo_tilde"], cache["zp"]
        sh2, z2 = cache["sh2"], cache["z2"]
        sh3, z3 = cache["sh3"], cache["z3"]

        d_zp = head_into("NP", zp, cmap.predicate_cols)
        d_qp = d_zp * zp * (1.0 - zp)
        if perceiving:
            enc_grads(d_qp, batch.feat_pred)
        grads["ctx_out"] += d_qp.T @ sh3
        d_sh3 = d_qp @ params.ctx_out
        d_h3 = through_drop(d_sh3, "sh3", sh3)
        grads["ctx_rec"] += d_h3.T @ z3
        d_m3 = (d_h3 @ params.ctx_rec) * z3 * (1.0 - z3)
        d_sh2 = d_m3.copy()
        grads["ctx_in"] += d_m3.T @ zo
        d_zo = d_m3 @ params.ctx_in
        d_qo = d_zo * zo * (1.0 - zo)
        np.add.at(d_emb.T, batch.obj_inject_cols, d_qo)
        d_qo_tilde = d_qo
        d_zo_tilde = head_into("NO", zo_tilde, cmap.concept_cols)
        d_qo_tilde = d_qo_tilde + d_zo_tilde * zo_tilde * (1.0 - zo_tilde)
        if perceiving:
            enc_grads(d_qo_tilde, batch.feat_obj)
        grads["ctx_out"] += d_qo_tilde.T @ sh2
        d_sh2 += d_qo_tilde @ params.ctx_out
        d_h2 = through_drop(d_sh2, "sh2", sh2)
        grads["ctx_rec"] += d_h2.T @ z2
        d_m2 = (d_h2 @ params.ctx_rec) * z2 * (1.0 - z2)
        d_sh1 += d_m2
        grads["ctx_in"] += d_m2.T @ zs
        d_zs += d_m2 @ params.ctx_in

    d_qs = d_zs * zs * (1.0 - zs)
    np.add.at(d_emb.T, batch.subj_inject_cols, d_qs)
    d_qs_tilde = d_qs
    if batch.mode != "semantic":
        d_zs_tilde = head_into("NS", zs_tilde, cmap.concept_cols)
        d_qs_tilde = d_qs_tilde + d_zs_tilde * zs_tilde * (1.0 - zs_tilde)
    if perceiving:
        enc_grads(d_qs_tilde, batch.feat_subj)
    grads["ctx_out"] += d_qs_tilde.T @ sh1
    d_sh1 += d_qs_tilde @ params.ctx_out
    d_h1 = through_drop(d_sh1, "sh1", sh1)
    grads["ctx_rec"] += d_h1.T @ z1
    d_m1 = (d_h1 @ params.ctx_rec) * z1 * (1.0 - z1)
    grads["ctx_in"] += d_m1.T @ zt
    d_zt = d_m1 @ params.ctx_in
    d_qt = d_zt * zt * (1.0 - zt)

    if batch.mode == "episodic":
        np.add.at(d_emb.T, batch.inst_cols, d_qt)
    elif batch.mode == "semantic":
        grads["pooled"] += d_qt.sum(axis=0)
    else:
        np.add.at(d_emb.T, batch.inst_cols, d_qt)
        zt_tilde = cache["zt_tilde"]
        d_zt_tilde = head_into("NT", zt_tilde, cmap.instance_cols)
        d_qt_tilde = d_qt + d_zt_tilde * zt_tilde * (1.0 - zt_tilde)
        enc_grads(d_qt_tilde, batch.feat_scene)
    return grads


def _backward_direct(params, cmap, batch, cache, grads, head_into, enc_grads) -> None:
    zt, zs = cache["zt"], cache["zs"]
    read = params.readout
    d_read = grads["emb_up"] if not params.config.tied else grads["emb"]

    d_zt = head_into("NT", zt, cmap.instance_cols)
    enc_grads(d_zt * zt * (1.0 - zt), batch.feat_scene)

    d_zs = head_into("NS", zs, cmap.concept_cols)
    if batch.arity == "unary":
        d_zs_fam = np.zeros_like(zs)
        for fam in sorted(batch.fam_rows):
            h = cache["fam_heads"][fam]
            rows = batch.fam_rows[fam]
            fcols = cmap.family_cols[fam]
            d_read[:, fcols] += zs[rows].T @ h["dscores"]
            d_zs_fam[rows] += h["dscores"] @ read[:, fcols].T
        d_zs = d_zs + d_zs_fam
    enc_grads(d_zs * zs * (1.0 - zs), batch.feat_subj)

    if batch.arity == "binary":
        zo, zp = cache["zo"], cache["zp"]
        d_zo = head_into("NO", zo, cmap.concept_cols)
        enc_grads(d_zo * zo * (1.0 - zo), batch.feat_obj)
        d_zp = head_into("NP", zp, cmap.predicate_cols)
        enc_grads(d_zp * zp * (1.0 - zp), batch.feat_pred)


def loss_and_grads(params: NetParams, cmap: ColumnMap, batch: Batch) -> tuple[float, dict]:
    loss, cache = forward(params, cmap, batch)
    return loss, backward(params, cmap, batch, cache)

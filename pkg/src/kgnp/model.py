"""Parameter bundle tying the encoder, hypothesis nets, and predictor together.

Construction is deterministic given (relation vocabulary, dims, seed):
parameters are created in a fixed order from a single seeded generator.
Checkpoints are JSON with a version header, the relation vocabulary, every
named parameter, and the optimizer moments, so a saved run can be rebuilt
and resumed bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterStore, Tensor, init_uniform
from .encoder import GnnLayer, GnnParams, RelationTable, embedding_dim
from .errors import DataError
from .hypothesis import HypothesisParams
from .predictor import FusionParams, ScoreHead

CHECKPOINT_VERSION = 1


@dataclass
class ModelDims:
    d_edge: int
    d_z: int
    n_layers: int


class Model:
    def __init__(self, relation_names: list[str], dims: ModelDims, init_seed: int = 0):
        self.relation_names = list(relation_names)
        self.dims = dims
        self.store = ParameterStore()
        rng = np.random.default_rng(init_seed)
        d_e, d_z = dims.d_edge, dims.d_z
        emb_dim = embedding_dim(d_e)

        def param(name, group, shape, fan_in):
            return self.store.register(name, Tensor(init_uniform(rng, shape, fan_in)), group)

        self.table = RelationTable(param("relations.table", "encoder",
                                         (len(relation_names), d_e), d_e))
        layers = []
        layer_in = 3 * d_e + 4
        for i in range(dims.n_layers):
            layers.append(GnnLayer(param(f"gnn.{i}.weight", "encoder", (layer_in, d_e), layer_in),
                                   param(f"gnn.{i}.bias", "encoder", (d_e,), layer_in)))
        self.gnn = GnnParams(layers)

        ctx_in = emb_dim + 1
        self.hyp = HypothesisParams(
            context_w1=param("context.w1", "encoder", (ctx_in, d_z), ctx_in),
            context_b1=param("context.b1", "encoder", (d_z,), ctx_in),
            context_w2=param("context.w2", "encoder", (d_z, d_z), d_z),
            context_b2=param("context.b2", "encoder", (d_z,), d_z),
            trunk_w=param("latent.trunk.w", "encoder", (d_z, d_z), d_z),
            trunk_b=param("latent.trunk.b", "encoder", (d_z,), d_z),
            mu_w=param("latent.mu.w", "encoder", (d_z, d_z), d_z),
            mu_b=param("latent.mu.b", "encoder", (d_z,), d_z),
            sigma_w=param("latent.sigma.w", "encoder", (d_z, d_z), d_z),
            sigma_b=param("latent.sigma.b", "encoder", (d_z,), d_z),
        )
        self.head = ScoreHead(
            weight=param("score_head.weight", "predictor", (emb_dim, d_z), emb_dim),
            bias=param("score_head.bias", "predictor", (d_z,), emb_dim),
        )
        self.fusion = FusionParams(
            proj_w=param("fusion.proj.w", "extractor", (d_z, d_e), d_z),
            proj_b=param("fusion.proj.b", "extractor", (d_e,), d_z),
            mlp_w1=param("fusion.mlp.w1", "extractor", (d_e, d_e), d_e),
            mlp_b1=param("fusion.mlp.b1", "extractor", (d_e,), d_e),
            mlp_w2=param("fusion.mlp.w2", "extractor", (d_e, 1), d_e),
            mlp_b2=param("fusion.mlp.b2", "extractor", (1,), d_e),
        )

    def reset_invocations(self):
        self.gnn.invocations = 0


def save_checkpoint(model: Model, path):
    payload = {
        "version": CHECKPOINT_VERSION,
        "dims": {"d_edge": model.dims.d_edge, "d_z": model.dims.d_z,
                 "L": model.dims.n_layers},
        "relations": model.relation_names,
        "store": model.store.state_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    dims = ModelDims(payload["dims"]["d_edge"], payload["dims"]["d_z"], payload["dims"]["L"])
    model = Model(payload["relations"], dims)
    model.store.load_state_dict(payload["store"])
    return model

"""
Experiment configuration and the gen-data / train / nn-test / fem-test /
sweep workflows for the truss and plate benchmarks.

Run directory layout (under [output] dir):
    data/direct_{train,test}.csv      strain-stress sequences
    data/indirect_{train,test}/       mesh + displacement/force CSVs
    data/reference/                   reference trajectories per case
    data/timing.csv, data/probes.json
    model/model.ckpt, model/train_log.csv, model/restarts.csv
    nn_test/, fem_test/, sweep/
"""
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import toml
from joblib import Parallel, delayed

from src.assembly import BCs, Discretization, LoadProtocol, external_force
from src.constitutive_models import (
    ConstitutiveModel,
    PointState,
    estimate_scaling,
    linear_stiffness,
    load_model,
    make_model,
    save_model,
    stress_update,
)
from src.datasets import DirectDataset, IndirectDataset, check_split
from src.dynamics import NewtonConfig, simulate
from src.errors import ConfigError, DataError, SPDNNError
from src.losses import IndirectProblem
from src.materials import LinearElastic, Plasticity1D, PlaneStressPlasticity, RivlinSaunders
from src.mesh import Mesh, fiber_plate_mesh, match_nodes, plate_mesh, truss_mesh
from src.optimizers import OptimizerConfig
from src.reference_materials import EPParams, HyperParams, linear_plane_stress
from src.reports import write_manifest
from src.stress_recovery import recovered_dataset, stress_recovery
from src.trajectory import Trajectory
from src.training import train_direct, train_indirect, train_with_restarts

logger = logging.getLogger(__name__)

EXPERIMENTS = ("truss", "plate-hyperelastic", "plate-elasto-plastic", "plate-fiber")
PLATE_CASES = [f"A{k}" for k in range(1, 7)] + [f"B{k}" for k in range(1, 7)] + ["C1"]


# -------------------------------------------------------------------
# Configuration
# -------------------------------------------------------------------
@dataclass
class MeshConfig:
    nx: int = 10
    ny: int = 5
    Lx: float = 0.1
    Ly: float = 0.05
    Lz: float = 0.001
    n_elements: int = 4
    element_length: float = 1.0
    area: float = 0.005
    fine_nx: int = 40
    fine_ny: int = 20
    n_fibers: list = field(default_factory=lambda: [4, 2])
    fiber_elements: int = 5


@dataclass
class TimeConfig:
    T: float = 0.2
    dt: float = 0.001

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class LoadConfig:
    p: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    train_cases: list = field(default_factory=list)
    test_cases: list = field(default_factory=list)


@dataclass
class MaterialConfig:
    rho: float = 8000.0
    E: float = 200e9
    nu: float = 0.0
    sigma_y: float = 0.3e9
    K: float = 200e9 / 9.0
    c1: float = 0.1863e6
    c2: float = 0.00979e6
    fiber_rho: float = 3200.0
    fiber_E: float = 400e9
    fiber_nu: float = 0.35


@dataclass
class ModelConfig:
    kind: str = "spd-ep"
    depth: int = 3
    width: int = 20
    activation: str = "tanh"
    layout: str = "orthotropic"
    sigma_y_est: float = 0.1e9
    d: float = 0.1
    elastic_source: str = "reference"
    approximate_tangent: bool = False


@dataclass
class OptimizerSection:
    method: str = "lbfgs"
    max_evals: int = 50000
    pretrain_evals: int = 3000
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-12
    learning_rate: float = 1e-3
    clip: float | None = None
    log_every: int = 100

    def to_config(self, max_evals=None) -> OptimizerConfig:
        return OptimizerConfig(
            self.method, self.max_evals if max_evals is None else max_evals, self.memory,
            self.c1, self.c2, self.gtol, self.learning_rate, clip=self.clip,
            log_every=self.log_every,
        )


@dataclass
class TrainingConfig:
    mode: str = "direct"
    restarts: int = 10
    history: str = "free"
    acceleration: str = "fd"
    pretrain: bool = True


@dataclass
class SweepConfig:
    kinds: list = field(default_factory=lambda: ["spd-ep"])
    depths: list = field(default_factory=lambda: [3])
    widths: list = field(default_factory=lambda: [20])
    activations: list = field(default_factory=lambda: ["tanh"])
    sigma_y_est: list = field(default_factory=list)
    d: list = field(default_factory=list)


@dataclass
class OutputConfig:
    dir: str = "reports/truss"


@dataclass
class ExperimentConfig:
    name: str = "truss"
    seed: int = 0
    n_jobs: int = 1
    full_scale: bool = False
    mesh: MeshConfig = field(default_factory=MeshConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def out_dir(self) -> Path:
        return Path(self.output.dir)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = ("mesh", "time", "load", "material", "model", "optimizer", "training", "sweep", "output")
EXPERIMENT_KEYS = ("name", "seed", "n_jobs", "full_scale")


def default_config(name: str = "truss") -> ExperimentConfig:
    """Built-in settings for each benchmark."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment {name!r}; choose from {EXPERIMENTS}")
    cfg = ExperimentConfig(name=name)
    cfg.output.dir = f"reports/{name}"
    if name == "truss":
        cfg.load.train_cases = ["tid1", "tid2", "tid4", "tid5"]
        cfg.load.test_cases = ["tid3"]
        return cfg

    cfg.load.train_cases = [c for c in PLATE_CASES if c[1] != "6" and c != "C1"]
    cfg.load.test_cases = ["A6", "B6", "C1"]
    cfg.model.depth = 5
    cfg.optimizer.max_evals = 2000
    if name == "plate-hyperelastic":
        cfg.material = MaterialConfig(rho=800.0, E=6.0 * (0.1863e6 + 0.00979e6), nu=0.5)
        cfg.load.p = [44800.0, 4480.0, 16800.0]
        cfg.model.kind = "spd"
    elif name == "plate-elasto-plastic":
        cfg.material = MaterialConfig(rho=4200.0, E=100e9, nu=0.35, sigma_y=0.97e9, K=10e9)
        cfg.load.p = [1.6e9, 0.16e9, 0.6e9]
        cfg.model.sigma_y_est = 0.32e9
    else:
        cfg.material = MaterialConfig(rho=4200.0, E=100e9, nu=0.35, sigma_y=0.97e9, K=10e9)
        cfg.load.p = [1.6e9, 0.16e9, 0.6e9]
        cfg.model.sigma_y_est = 0.32e9
        cfg.mesh.nx, cfg.mesh.ny = 8, 4
        cfg.training.mode = "indirect"
    return cfg


def _apply(section_obj, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(section_obj)}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"Unknown key {key!r} in section [{section}]")
        setattr(section_obj, key, value)


def load_config(path=None, name: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """
    Defaults for the experiment, then the TOML file, then CLI overrides.

    `overrides` maps "section.key" (or a top-level experiment key) to a value.
    """
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file {path} not found")
        try:
            raw = toml.load(path)
        except toml.TomlDecodeError as exc:
            raise ConfigError(f"{path}: {exc}")

    exp = dict(raw.pop("experiment", {}))
    cfg = default_config(name or exp.get("name", "truss"))
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown config sections {sorted(unknown)}")
    bad = set(exp) - set(EXPERIMENT_KEYS)
    if bad:
        raise ConfigError(f"Unknown keys {sorted(bad)} in section [experiment]")
    for key, value in exp.items():
        setattr(cfg, key, value)
    if name:
        cfg.name = name
    for section, values in raw.items():
        _apply(getattr(cfg, section), values, section)

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in dotted:
            section, key = dotted.split(".", 1)
            _apply(getattr(cfg, section), {key: value}, section)
        else:
            setattr(cfg, dotted, value)

    if cfg.full_scale and cfg.name in ("plate-hyperelastic", "plate-elasto-plastic"):
        cfg.mesh.nx, cfg.mesh.ny = 20, 10
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.name not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment {cfg.name!r}")
    if cfg.time.T <= 0 or cfg.time.dt <= 0 or cfg.time.n_steps < 3:
        raise ConfigError("Need T > 0, dt > 0 and at least three steps")
    known = [f"tid{k}" for k in range(1, 6)] if cfg.name == "truss" else PLATE_CASES
    for case in cfg.load.train_cases + cfg.load.test_cases:
        if case not in known:
            raise ConfigError(f"Unknown load case {case!r} for {cfg.name}")
    try:
        check_split(cfg.load.train_cases, cfg.load.test_cases)
    except ValueError as exc:
        raise ConfigError(str(exc))
    if cfg.training.mode not in ("direct", "indirect"):
        raise ConfigError(f"Unknown training mode {cfg.training.mode!r}")
    if cfg.training.restarts < 1:
        raise ConfigError("restarts must be at least 1")


# -------------------------------------------------------------------
# Problem setup
# -------------------------------------------------------------------
def build_mesh(cfg: ExperimentConfig, fine: bool = False) -> Mesh:
    m, mat = cfg.mesh, cfg.material
    if cfg.name == "truss":
        return truss_mesh(m.n_elements, m.element_length, m.area, mat.rho)
    if cfg.name == "plate-fiber":
        if fine:
            return fiber_plate_mesh(m.fine_nx, m.fine_ny, m.Lx, m.Ly, m.Lz,
                                    (mat.rho, mat.fiber_rho), tuple(m.n_fibers), m.fiber_elements)
        rho = (1.0 - fiber_fraction(cfg)) * mat.rho + fiber_fraction(cfg) * mat.fiber_rho
        return plate_mesh(m.nx, m.ny, m.Lx, m.Ly, m.Lz, rho)
    return plate_mesh(m.nx, m.ny, m.Lx, m.Ly, m.Lz, mat.rho,
                      finite_strain=cfg.name == "plate-hyperelastic")


def fiber_fraction(cfg: ExperimentConfig) -> float:
    m = cfg.mesh
    return m.n_fibers[0] * m.n_fibers[1] * m.fiber_elements ** 2 / (m.fine_nx * m.fine_ny)


def truss_load(tid: int) -> float:
    return (0.4 * tid + 1.6) * 1e6


def case_setup(cfg: ExperimentConfig, case: str):
    """(BCs, LoadProtocol) of a named load case."""
    T = cfg.time.T
    if cfg.name == "truss":
        tid = int(case[3:])
        bcs = BCs(clamped=("left",), loaded=("right",), fixed_components=(1,))
        return bcs, LoadProtocol((truss_load(tid), 0.0), T, case)

    p1, p2, p3 = cfg.load.p
    r2 = np.sqrt(2.0)
    family, k = case[0], case[1:]
    if family == "A":
        p = {"1": (0, p1), "2": (0, -p1), "3": (p3, 0), "4": (-p3, 0),
             "5": (p3 / r2, p1 / r2), "6": (0.75 * p3, 0)}[k]
        return BCs(clamped=("bottom",), loaded=("top",)), LoadProtocol(p, T, case)
    if family == "B":
        p = {"1": (p1, 0), "2": (-p1, 0), "3": (0, p2), "4": (0, -p2),
             "5": (p1 / r2, p2 / r2), "6": (0, 0.75 * p2)}[k]
        return BCs(clamped=("left",), loaded=("right",)), LoadProtocol(p, T, case)
    Lx = cfg.mesh.Lx
    protocol = LoadProtocol((0.0, p2), T, case, profile="gaussian",
                            x0=5.0 * Lx / 6.0, sigma_x=0.2 * Lx, length=Lx)
    return BCs(clamped=("left",), loaded=("bottom",)), protocol


def reference_material(cfg: ExperimentConfig):
    mat = cfg.material
    if cfg.name == "truss":
        return Plasticity1D(EPParams(mat.E, mat.sigma_y, mat.K))
    if cfg.name == "plate-hyperelastic":
        return RivlinSaunders(HyperParams(mat.c1, mat.c2))
    matrix = PlaneStressPlasticity(EPParams(mat.E, mat.sigma_y, mat.K, mat.nu))
    if cfg.name == "plate-elasto-plastic":
        return matrix
    fiber = LinearElastic(linear_plane_stress(mat.fiber_E, mat.fiber_nu))
    return {0: matrix, 1: fiber}


def estimated_modulus(cfg: ExperimentConfig) -> float:
    mat = cfg.material
    if cfg.name == "plate-fiber":
        f = fiber_fraction(cfg)
        return (1.0 - f) * mat.E + f * mat.fiber_E
    return mat.E


def elastic_tangent(cfg: ExperimentConfig):
    """Fixed elastic branch C of spd-ep models."""
    src = cfg.model.elastic_source
    if src.startswith("checkpoint:"):
        linear = load_model(src.split(":", 1)[1])
        if linear.kind != "linear":
            raise ConfigError(f"{src} is not a linear model checkpoint")
        return linear_stiffness(linear)
    if src != "reference":
        raise ConfigError(f"Unknown elastic source {src!r}")
    mat = cfg.material
    if cfg.name == "truss":
        return np.array([[mat.E]])
    try:
        C = linear_plane_stress(mat.E, mat.nu)
    except ValueError as exc:
        raise ConfigError(f"No reference elastic tangent: {exc}")
    if cfg.name == "plate-fiber":
        f = fiber_fraction(cfg)
        C = (1.0 - f) * C + f * linear_plane_stress(mat.fiber_E, mat.fiber_nu)
    return C


def n_gp(cfg: ExperimentConfig) -> int:
    return 1 if cfg.name == "truss" else 9


def model_dim(cfg: ExperimentConfig) -> int:
    return 1 if cfg.name == "truss" else 3


def probes(cfg: ExperimentConfig, mesh: Mesh) -> dict:
    """Probe nodes (right end / top-right and top-middle) and points."""
    if cfg.name == "truss":
        return {"nodes": [int(mesh.n_nodes - 1)], "points": [int(mesh.n_elements - 1)]}
    nxn = 2 * cfg.mesh.nx + 1
    top_right = mesh.n_nodes - 1
    top_middle = mesh.n_nodes - nxn + cfg.mesh.nx
    return {"nodes": [int(top_right), int(top_middle)],
            "points": [int((mesh.n_elements - 1) * 9)]}


# -------------------------------------------------------------------
# gen-data
# -------------------------------------------------------------------
def _run_reference(cfg: ExperimentConfig, case: str, fine: bool):
    mesh = build_mesh(cfg, fine=fine)
    bcs, protocol = case_setup(cfg, case)
    traj = simulate(mesh, bcs, protocol, reference_material(cfg), cfg.time.n_steps, cfg.time.dt)
    if traj.diverged:
        raise DataError(f"Reference simulation of {case} diverged at step {traj.diverged_step}: "
                        f"{traj.message}")
    logger.info(f"{case}: {traj.n_steps} steps in {traj.wall_time:.2f}s "
                f"(mean Newton iterations {np.mean(traj.newton_iters):.2f})")
    return traj


def coarse_forces(cfg: ExperimentConfig, mesh: Mesh, case: str):
    disc = Discretization(mesh)
    bcs, protocol = case_setup(cfg, case)
    times = cfg.time.dt * np.arange(cfg.time.n_steps + 1)
    return np.stack([external_force(disc, bcs, protocol, t) for t in times])


def gen_data(cfg: ExperimentConfig) -> dict:
    """Simulate every case with the reference material and write datasets."""
    out = cfg.out_dir / "data"
    cases = cfg.load.train_cases + cfg.load.test_cases
    fiber = cfg.name == "plate-fiber"
    logger.info(f"Generating {cfg.name} data for {len(cases)} cases")

    trajs = Parallel(n_jobs=cfg.n_jobs)(delayed(_run_reference)(cfg, c, fiber) for c in cases)
    by_case = dict(zip(cases, trajs))

    mesh = build_mesh(cfg)
    fine = build_mesh(cfg, fine=True) if fiber else mesh
    ref_dir = out / "reference"
    for case, traj in by_case.items():
        traj.write(ref_dir, case, n_gp(cfg))
    pd.DataFrame({
        "case": cases, "seconds": [t.wall_time for t in trajs],
        "mesh": "fine" if fiber else "model",
    }).to_csv(out / "timing.csv", index=False)

    fixed = case_setup(cfg, cases[0])[0].dirichlet_dofs(mesh)
    for split, names in (("train", cfg.load.train_cases), ("test", cfg.load.test_cases)):
        if not names:
            continue
        group = [by_case[c] for c in names]
        if fiber:
            node_map = match_nodes(fine, mesh)
            forces = [coarse_forces(cfg, mesh, c) for c in names]
            obs = IndirectDataset.from_trajectories(mesh, group, fixed, names, node_map, forces)
        else:
            obs = IndirectDataset.from_trajectories(mesh, group, fixed, names)
            DirectDataset.from_trajectories(group, names).write_csv(out / f"direct_{split}.csv")
        obs.write(out / f"indirect_{split}")

    (out / "probes.json").write_text(json.dumps(probes(cfg, mesh), indent=2))
    write_manifest(cfg.out_dir, "gen-data", cfg.to_dict(), [])
    return by_case


# -------------------------------------------------------------------
# train
# -------------------------------------------------------------------
def initial_model(cfg: ExperimentConfig, strains) -> ConstitutiveModel:
    mc = cfg.model
    scaling = estimate_scaling(strains, estimated_modulus(cfg))
    elastic = elastic_tangent(cfg) if mc.kind == "spd-ep" else None
    return make_model(
        mc.kind, model_dim(cfg), mc.depth, mc.width, mc.activation, cfg.seed, scaling,
        mc.layout, mc.sigma_y_est, mc.d, elastic=elastic,
    )


def train(cfg: ExperimentConfig, max_evals: int | None = None):
    """Best-of-restarts training; writes the checkpoint and logs."""
    data_dir = cfg.out_dir / "data"
    model_dir = cfg.out_dir / "model"
    opt = cfg.optimizer.to_config(max_evals)
    tc = cfg.training

    if tc.mode == "direct":
        data = DirectDataset.read_csv(data_dir / "direct_train.csv")
        model = initial_model(cfg, data.eps)
        fit = lambda m: train_direct(m, data, opt)
        inputs = [data_dir / "direct_train.csv"]
    else:
        obs = IndirectDataset.read(data_dir / "indirect_train")
        problem = IndirectProblem(obs, tc.acceleration)
        strains = np.concatenate([c.eps.reshape(-1, c.eps.shape[-1]) for c in problem.cases])
        model = initial_model(cfg, strains)
        pre = None
        recovered = None
        if tc.pretrain and model.kind != "linear":
            pre = cfg.optimizer.to_config(cfg.optimizer.pretrain_evals)
            recovered = recovered_dataset(obs, stress_recovery(obs))
        fit = lambda m: train_indirect(m, problem, opt, pre, recovered, tc.history, tc.acceleration)
        inputs = sorted((data_dir / "indirect_train").glob("*"))

    logger.info(f"Training {model.kind} ({model.n_params} parameters, {tc.mode} data, "
                f"{tc.restarts} restarts)")
    best, results = train_with_restarts(fit, model, tc.restarts, cfg.seed, cfg.n_jobs)

    save_model(model_dir / "model.ckpt", best.model)
    best.history.write_csv(model_dir / "train_log.csv")
    if best.pretrain_history is not None:
        best.pretrain_history.write_csv(model_dir / "pretrain_log.csv")
    pd.DataFrame({
        "seed": [r.seed for r in results],
        "loss": [r.loss for r in results],
        "status": [r.history.status for r in results],
        "fevals": [r.history.rows[-1]["fevals"] if r.history.rows else 0 for r in results],
    }).to_csv(model_dir / "restarts.csv", index=False)
    write_manifest(cfg.out_dir, "train", cfg.to_dict(), inputs)
    return best


# -------------------------------------------------------------------
# nn-test
# -------------------------------------------------------------------
def one_step_predictions(model: ConstitutiveModel, data: DirectDataset):
    dim = data.dim
    state = PointState(data.eps[:, :-1].reshape(-1, dim), data.sig[:, :-1].reshape(-1, dim))
    with np.errstate(over="ignore", invalid="ignore"):
        pred = stress_update(model, data.eps[:, 1:].reshape(-1, dim), state)
    return pred.reshape(data.n_sequences, data.n_steps - 1, dim)


def nn_test(cfg: ExperimentConfig, checkpoint=None, dataset=None) -> pd.DataFrame:
    """Teacher-forced one-step stress predictions on held-out tuples."""
    if dataset is None and cfg.name == "plate-fiber":
        raise ConfigError(
            "nn-test needs direct strain-stress data, but the fiber plate only produces "
            "displacement/force data for its homogenized mesh; pass a direct dataset CSV"
        )
    checkpoint = checkpoint or cfg.out_dir / "model" / "model.ckpt"
    dataset = dataset or cfg.out_dir / "data" / "direct_test.csv"
    model = load_model(checkpoint)
    data = DirectDataset.read_csv(dataset)
    pred = one_step_predictions(model, data)
    true = data.sig[:, 1:]

    out = cfg.out_dir / "nn_test"
    out.mkdir(parents=True, exist_ok=True)
    frame = DirectDataset(data.eps[:, 1:], pred, data.cases, data.points).to_frame()
    frame = frame.rename(columns={f"sig{k}": f"pred{k}" for k in range(data.dim)})
    for k in range(data.dim):
        frame[f"sig{k}"] = true[:, :, k].ravel()
    frame["step"] += 1
    frame.to_csv(out / "nn_test.csv", index=False)

    rows = []
    for case in dict.fromkeys(data.cases):
        idx = [j for j, c in enumerate(data.cases) if c == case]
        err = pred[idx] - true[idx]
        peak = float(np.max(np.abs(true[idx]))) if true[idx].size else 0.0
        rmse = float(np.sqrt(np.mean(err ** 2)))
        rows.append({"case": case, "rmse": rmse, "peak_stress": peak,
                     "relative_rmse": rmse / peak if peak > 0 else np.nan})
    summary = pd.DataFrame(rows)
    summary.to_csv(out / "summary.csv", index=False)
    write_manifest(cfg.out_dir, "nn-test", cfg.to_dict(), [checkpoint, dataset])
    for r in rows:
        logger.info(f"NN test {r['case']}: RMSE {r['rmse']:.4e} ({r['relative_rmse']:.2%} of peak)")
    return summary


# -------------------------------------------------------------------
# fem-test
# -------------------------------------------------------------------
def _reference_trajectory(cfg, case):
    ref_dir = cfg.out_dir / "data" / "reference"
    try:
        return Trajectory.read(ref_dir, case)
    except DataError:
        logger.info(f"No stored reference for {case}; simulating it")
        return _run_reference(cfg, case, cfg.name == "plate-fiber")


def _divergence_limit(cfg):
    path = cfg.out_dir / "data" / "indirect_train"
    try:
        obs = IndirectDataset.read(path)
    except DataError:
        return None
    peak = float(np.max(np.abs(obs.U)))
    return 1e3 * peak if peak > 0 else None


def _fem_case(cfg, material, case, limit, approximate):
    mesh = build_mesh(cfg)
    bcs, protocol = case_setup(cfg, case)
    newton = NewtonConfig()
    return simulate(mesh, bcs, protocol, material, cfg.time.n_steps, cfg.time.dt,
                    newton=newton, divergence_limit=limit, approximate_tangent=approximate)


def _reference_displacements(cfg, ref: Trajectory):
    """Reference displacements on the model mesh (fiber runs are sampled)."""
    U = np.asarray(ref.u)
    if cfg.name != "plate-fiber":
        return U
    node_map = match_nodes(build_mesh(cfg, fine=True), build_mesh(cfg))
    return U[:, (2 * node_map[:, None] + np.arange(2)).ravel()]


def fem_test(cfg: ExperimentConfig, checkpoint=None, cases=None, out_name="fem_test",
             model: ConstitutiveModel | None = None) -> pd.DataFrame:
    """
    Forward simulations of the test cases with the learned model.

    checkpoint="reference" runs the reference material instead, which
    reproduces the gen-data trajectories.
    """
    cases = cases or cfg.load.test_cases
    if model is not None:
        material = model
    elif checkpoint == "reference":
        material = reference_material(cfg)
    else:
        checkpoint = checkpoint or cfg.out_dir / "model" / "model.ckpt"
        material = load_model(checkpoint)
    limit = _divergence_limit(cfg)
    approximate = cfg.model.approximate_tangent

    if checkpoint == "reference" and cfg.name == "plate-fiber":
        runs = [_run_reference(cfg, c, True) for c in cases]
    else:
        runs = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_fem_case)(cfg, material, c, limit, approximate) for c in cases
        )

    out = cfg.out_dir / out_name
    rows = []
    for case, traj in zip(cases, runs):
        traj.write(out, case, n_gp(cfg))
        ref = _reference_trajectory(cfg, case)
        U_ref = _reference_displacements(cfg, ref)
        U = np.asarray(traj.u)
        mse = np.nan
        if not traj.diverged and U.shape[1] == U_ref.shape[1]:
            mse = float(np.mean((U[-1] - U_ref[-1]) ** 2))
        rows.append({
            "case": case, "status": traj.status, "diverged_step": traj.diverged_step,
            "final_disp_mse": mse, "wall_time": traj.wall_time,
            "reference_wall_time": ref.wall_time,
            "mean_newton_iters": float(np.mean(traj.newton_iters)) if traj.newton_iters else np.nan,
        })
        logger.info(f"FEM test {case}: {traj.status}, final displacement MSE {mse:.3e}")
    summary = pd.DataFrame(rows)
    summary.to_csv(out / "summary.csv", index=False)
    inputs = [] if checkpoint in (None, "reference") else [checkpoint]
    write_manifest(cfg.out_dir, out_name.replace("_", "-"), cfg.to_dict(), inputs)
    return summary


# -------------------------------------------------------------------
# sweep
# -------------------------------------------------------------------
def sweep_cells(cfg: ExperimentConfig) -> list:
    """Cartesian grid over architecture/activation, or over (σ̃_Y, d)."""
    sw = cfg.sweep
    if sw.sigma_y_est or sw.d:
        ys = sw.sigma_y_est or [cfg.model.sigma_y_est]
        ds = sw.d or [cfg.model.d]
        return [{"kind": cfg.model.kind, "depth": cfg.model.depth, "width": cfg.model.width,
                 "activation": cfg.model.activation, "sigma_y_est": y, "d": d}
                for y in ys for d in ds]
    return [{"kind": k, "depth": dp, "width": w, "activation": a,
             "sigma_y_est": cfg.model.sigma_y_est, "d": cfg.model.d}
            for k in sw.kinds for dp in sw.depths for w in sw.widths for a in sw.activations]


def _sweep_cell(cfg: ExperimentConfig, cell: dict, index: int, max_evals):
    cell_cfg = dataclasses.replace(
        cfg, n_jobs=1,
        model=dataclasses.replace(cfg.model, **cell),
        output=OutputConfig(str(cfg.out_dir / "sweep" / f"cell{index:03d}")),
    )
    data_src = cfg.out_dir / "data"
    data_dst = cell_cfg.out_dir / "data"
    if not data_dst.exists():
        data_dst.parent.mkdir(parents=True, exist_ok=True)
        data_dst.symlink_to(data_src.resolve(), target_is_directory=True)

    row = dict(cell, cell=index)
    try:
        best = train(cell_cfg, max_evals)
        row["train_loss"] = best.loss
        summary = fem_test(cell_cfg, model=best.model)
    except SPDNNError as exc:
        logger.warning(f"Sweep cell {index} failed: {exc}")
        row.update(train_loss=np.nan, status="failed", final_disp_mse=np.nan)
        return [row]
    rows = []
    for r in summary.to_dict("records"):
        rows.append({**row, **r})
    return rows


def sweep(cfg: ExperimentConfig, max_evals: int | None = None) -> pd.DataFrame:
    cells = sweep_cells(cfg)
    logger.info(f"Sweep over {len(cells)} cells")
    results = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_sweep_cell)(cfg, cell, k, max_evals) for k, cell in enumerate(cells)
    )
    frame = pd.DataFrame([r for rows in results for r in rows])
    out = cfg.out_dir / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "sweep.csv", index=False)

    agg = (
        frame.groupby("cell", sort=True)
        .agg(final_disp_mse=("final_disp_mse", lambda s: s.mean(skipna=False)),
             diverged=("status", lambda s: int((s != "ok").sum())))
        .reset_index()
    )
    agg.to_csv(out / "sweep_summary.csv", index=False)
    write_manifest(cfg.out_dir, "sweep", cfg.to_dict(), [])
    return frame

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from dotenv import dotenv_values

from ..infra.config import Config
from ..infra.errors import ConfigError, GridDimensionError, RateRangeError

COMMANDS = (
    'spectrum',
    'moduli-dim',
    'verify-associative',
    'trace-cone',
    'build-nuv',
    'rate-fit',
    'sl-compare',
)

LINK_SOURCES = ('equatorial', 'sphere124', 'sl_torus', 'torus_cone')
MESH_SOURCES = ('nuv', 'cone', 'plane', 'plane124', 'plane+e4')
OPERATORS = ('dbar', 'dirac', 'laplacian')


def _floats(text: str, name: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).replace(',', ' ').split())
    except ValueError:
        raise ConfigError(f'Malformed {name} {text!r}', {name: text})


def parse_grid(text: str) -> Tuple[int, int]:
    """'WxH' -> (W, H)"""
    try:
        w, h = str(text).lower().split('x')
        return int(w), int(h)
    except ValueError:
        raise ConfigError(f'Malformed grid {text!r}, expected WxH', {'grid': text})


@dataclass
class JobConfig:
    """One batch job: command, geometry source, grid and numerical settings.

    Values arrive as text from flags or a config file and are parsed by
    validate(), so malformed input surfaces as a ConfigError.
    """
    command: str
    link: Optional[str] = None
    mesh: Optional[str] = None
    curve: Optional[str] = None
    grid: Optional[str] = None
    rladder: str = Config.RLADDER
    lambda_: Optional[str] = None
    window: str = Config.WINDOW
    tol: Optional[str] = None
    seed: int = Config.SEED
    out: str = Config.OUT_DIR
    u: str = '0'
    v: str = '0'
    betti: Optional[str] = None
    a: Optional[str] = None
    operator: str = 'dbar'
    parsed: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_options(cls, command: str, options: Dict[str, Any], config_file: Optional[str] = None) -> 'JobConfig':
        """Config file values first, then every flag that was given"""
        values: Dict[str, Any] = {}
        if config_file:
            known = {f.name for f in fields(cls)} - {'command', 'parsed'}
            for key, value in dotenv_values(config_file).items():
                name = key.lower().removeprefix('g2moduli_')
                name = 'lambda_' if name == 'lambda' else name
                if name in known and value is not None:
                    values[name] = value
        values.update({k: v for k, v in options.items() if v is not None})
        if 'seed' in values:
            try:
                values['seed'] = int(values['seed'])
            except ValueError:
                raise ConfigError(f"Malformed seed {values['seed']!r}", {'seed': values['seed']})
        return cls(command=command, **values)

    def validate(self) -> Dict[str, Any]:
        if self.command not in COMMANDS:
            raise ConfigError(f'Unknown command {self.command!r}', {'commands': list(COMMANDS)})
        if self.link and self.mesh:
            raise ConfigError('Give either a link or a mesh, not both')
        if self.operator not in OPERATORS:
            raise ConfigError(f'Unknown operator {self.operator!r}', {'operators': list(OPERATORS)})
        parsed: Dict[str, Any] = {}
        if self.grid is not None:
            w, h = parse_grid(self.grid)
            if min(w, h) < Config.MIN_GRID:
                raise GridDimensionError(f'Grid {self.grid} is below {Config.MIN_GRID} per axis',
                                         {'grid': self.grid, 'min': Config.MIN_GRID})
            parsed['grid'] = (w, h)
        if self.tol is not None:
            (tol,) = _floats(self.tol, 'tol')
            if tol <= 0:
                raise ConfigError('Tolerance must be positive', {'tol': tol})
            parsed['tol'] = tol
        if self.lambda_ is not None:
            (lam,) = _floats(self.lambda_, 'lambda')
            if self.command == 'moduli-dim' and lam >= 1:
                raise RateRangeError(f'Rate must be below 1, got {lam}', {'lambda': lam})
            parsed['lambda'] = lam
        elif self.command == 'moduli-dim':
            raise ConfigError('moduli-dim needs --lambda')
        (parsed['u'],) = _floats(self.u, 'u')
        (parsed['v'],) = _floats(self.v, 'v')
        if self.betti is not None:
            betti = tuple(int(b) for b in _floats(self.betti, 'betti'))
            if len(betti) != 3 or min(betti) < 0:
                raise ConfigError('betti expects three non-negative integers b0,b1,b2', {'betti': self.betti})
            parsed['betti'] = betti
        if self.a is not None:
            a = _floats(self.a, 'a')
            if len(a) != 4:
                raise ConfigError('a expects four constants a1,a2,a3,a4', {'a': self.a})
            parsed['a'] = a
        self.parsed = parsed
        return parsed

    def to_dict(self) -> Dict[str, Any]:
        """Config echo; rerunning with these values reproduces the job"""
        data = asdict(self)
        data.pop('parsed')
        data['lambda'] = data.pop('lambda_')
        return data

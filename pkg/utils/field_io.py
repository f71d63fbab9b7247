"""
Text codecs for periodic fields and assembled operators.

Field literal:
    # rank=scalar real=true mean_zero=false s=2.5 name=V
    m_1 ... m_d re im [re im ...]

Operator dump:
    # operator d=2 N=16 k=<re>,<im>;<re>,<im> precondition=false A=<id> V=<id>
    i j re im
"""

from typing import Dict, Tuple

import numpy as np

from spectral.errors import ShapeError
from spectral.fourier_core import Lattice, PeriodicField
from utils.log_setup import get_logger

logger = get_logger('field_io')

FLOAT_FORMAT = '%.17g'


def _fmt(x: float) -> str:
    return FLOAT_FORMAT % x


def _parse_header(line: str) -> Dict[str, str]:
    tokens = line.lstrip('#').split()
    header = {}
    for token in tokens:
        if '=' in token:
            key, value = token.split('=', 1)
            header[key.strip()] = value.strip()
    return header


def _flag(value: str) -> bool:
    return value.lower() in ('1', 'true', 'yes')


def parse_field_literal(text: str, lattice: Lattice) -> PeriodicField:
    """Parse a field literal onto the given lattice.

    Modes outside the lattice are rejected with a shape error.
    """
    lines = [ln.strip() for ln in text.strip().splitlines()]
    header = {}
    if lines and lines[0].startswith('#'):
        header = _parse_header(lines[0])
        lines = lines[1:]
    rank = header.get('rank', 'scalar')
    q = int(header.get('q', 2))
    width = {'scalar': 1, 'vector': lattice.d, 'matrix': q * q}.get(rank)
    if width is None:
        raise ShapeError(f"unknown rank {rank!r} in field literal")
    zeros = PeriodicField.zeros(lattice, rank, q)
    coeffs = np.array(zeros.coeffs)
    flat = coeffs.reshape(lattice.size, -1)
    for number, line in enumerate(lines, start=2):
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if len(parts) != lattice.d + 2 * width:
            raise ShapeError(f"field literal line {number}: expected {lattice.d} mode entries and "
                             f"{width} re/im pairs, got {len(parts)} tokens")
        mode = tuple(int(p) for p in parts[:lattice.d])
        values = np.array([float(p) for p in parts[lattice.d:]])
        flat[lattice.index_of(mode)] = values[0::2] + 1j * values[1::2]
    smoothness = float(header['s']) if 's' in header else None
    return PeriodicField(lattice, coeffs, rank,
                         real=_flag(header.get('real', 'false')),
                         mean_zero=_flag(header.get('mean_zero', 'false')),
                         smoothness=smoothness, name=header.get('name', ''))


def format_field_literal(u: PeriodicField) -> str:
    """Emit a field literal; zero coefficients are omitted."""
    header = [f"rank={u.rank}", f"real={'true' if u.real else 'false'}",
              f"mean_zero={'true' if u.mean_zero else 'false'}"]
    if u.rank == 'matrix':
        header.append(f"q={u.q}")
    if u.smoothness is not None:
        header.append(f"s={_fmt(u.smoothness)}")
    if u.name:
        header.append(f"name={u.name}")
    out = ['# ' + ' '.join(header)]
    flat = u.coeffs.reshape(u.lattice.size, -1)
    for i in np.flatnonzero(np.abs(flat).max(axis=1) > 0):
        mode = ' '.join(str(int(x)) for x in u.lattice.modes[i])
        values = ' '.join(f"{_fmt(c.real)} {_fmt(c.imag)}" for c in flat[i])
        out.append(f"{mode} {values}")
    return '\n'.join(out) + '\n'


def write_field(u: PeriodicField, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_field_literal(u))
    logger.info(f"Wrote field {u.name or '<anon>'} ({u.rank}) to {path}")


def read_field(path: str, lattice: Lattice) -> PeriodicField:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_field_literal(f.read(), lattice)


def format_operator_dump(op) -> str:
    """Coordinate list of the nonzero entries of an AssembledOperator."""
    k = ';'.join(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in op.k)
    lines = [f"# operator d={op.lattice.d} N={op.lattice.N} k={k} "
             f"precondition={'true' if op.preconditioned else 'false'} "
             f"A={op.a_name or '0'} V={op.v_name or '0'}"]
    rows, cols = np.nonzero(op.matrix)
    for i, j in zip(rows, cols):
        z = op.matrix[i, j]
        lines.append(f"{i} {j} {_fmt(z.real)} {_fmt(z.imag)}")
    return '\n'.join(lines) + '\n'


def write_operator_dump(op, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_operator_dump(op))
    logger.info(f"Wrote operator dump ({op.size}x{op.size}) to {path}")


def parse_operator_dump(text: str) -> Tuple[Dict[str, str], np.ndarray]:
    """Read an operator dump back into (header, dense matrix)."""
    lines = text.strip().splitlines()
    header = _parse_header(lines[0])
    size = (2 * int(header['N']) + 1) ** int(header['d'])
    matrix = np.zeros((size, size), dtype=complex)
    for line in lines[1:]:
        i, j, re, im = line.split()
        matrix[int(i), int(j)] = float(re) + 1j * float(im)
    return header, matrix

"""
Utility routines
"""
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ORIENTATION_MAP = {'U': 'user',
                   'I': 'item'}

SOURCE_MAP = {'O': 'outcomes',
              'T': 'treatments'}

BASELINES = ['Random', 'Pop', 'UBN', 'IBN']

WORKERS_ENV = 'CAUSALRANK_WORKERS'


def parse_method(sh):
    """
    causalrank accepts a shorthand expression for ranking methods.

    Parse strings of the form

    - "Random", "Pop"
    - "UBN", "IBN"
    - "CUBN-O", "CIBN-T"
    - "CUBN-O-woM"
    - "external:name"

    Parameters
    ----------
    sh: str

    Returns
    -------
    dict with key 'family' ('random', 'pop', 'neighborhood', 'causal' or
    'external') and, depending on the family, 'orientation', 'source',
    'mix_own' or 'name'.
    """
    sh0 = sh.strip()
    if not sh0:
        raise ValueError('Empty method name')

    if sh0.lower().startswith('external:'):
        name = sh0.split(':', 1)[1].strip()
        if not name:
            raise ValueError('External method needs a name: "{0}"'.format(sh))
        return {'family': 'external', 'name': name}

    lookup = {b.upper(): b for b in BASELINES}
    key = sh0.upper()
    if key == 'RANDOM':
        return {'family': 'random'}
    if key == 'POP':
        return {'family': 'pop'}
    if key in ('UBN', 'IBN'):
        return {'family': 'neighborhood',
                'orientation': ORIENTATION_MAP[key[0]]}

    L = sh0.split('-')
    if len(L) not in (2, 3) or L[0].upper() not in ('CUBN', 'CIBN'):
        valid = list(lookup.values()) + ['C[U|I]BN-[O|T][-woM]',
                                         'external:<name>']
        raise ValueError('Invalid method: "{0}".\n'
                         'Valid values are {1}'.format(sh, valid))
    source = L[1].upper()
    if source not in SOURCE_MAP:
        raise ValueError('Invalid similarity source "{0}" in "{1}"; '
                         'expected O or T'.format(L[1], sh))
    mix_own = True
    if len(L) == 3:
        if L[2].lower() != 'wom':
            raise ValueError('Invalid method suffix "{0}" in "{1}"; '
                             'expected woM'.format(L[2], sh))
        mix_own = False
    return {'family': 'causal',
            'orientation': ORIENTATION_MAP[L[0][1].upper()],
            'source': SOURCE_MAP[source],
            'mix_own': mix_own}


def method_name(parsed):
    """Canonical method name for the output of ``parse_method``"""
    family = parsed['family']
    if family == 'random':
        return 'Random'
    if family == 'pop':
        return 'Pop'
    if family == 'external':
        return 'external:{0}'.format(parsed['name'])
    letter = 'U' if parsed['orientation'] == 'user' else 'I'
    if family == 'neighborhood':
        return '{0}BN'.format(letter)
    name = 'C{0}BN-{1}'.format(letter, parsed['source'][0].upper())
    if not parsed['mix_own']:
        name += '-woM'
    return name


def descending_order(scores):
    """
    Item order by descending score, ties broken by ascending index.

    Works row-wise on 2-D input.
    """
    scores = np.asarray(scores, dtype=float)
    return np.argsort(-scores, axis=-1, kind='stable')


def ranks_from_order(order):
    """Invert an order array into 1-based rank positions (row-wise)."""
    order = np.atleast_2d(order)
    ranks = np.empty_like(order)
    rows = np.arange(order.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, order.shape[1] + 1)
    return ranks


def derive_seed(seed, *keys):
    """
    Stable 63-bit seed derived from a base seed and any number of keys.

    Uses blake2b, so the value does not depend on PYTHONHASHSEED.
    """
    text = '/'.join(str(k) for k in (seed,) + keys)
    digest = hashlib.blake2b(text.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little') >> 1


def stream_key(seed, *keys):
    """128-bit key for a counter-based bit generator."""
    text = '/'.join(str(k) for k in (seed,) + keys)
    digest = hashlib.blake2b(text.encode('utf-8'), digest_size=16).digest()
    return int.from_bytes(digest, 'little')


def worker_count(workers=None):
    """
    Number of parallel workers: explicit value, else $CAUSALRANK_WORKERS,
    else 1.
    """
    if workers is None:
        value = os.environ.get(WORKERS_ENV, '').strip()
        if not value:
            return 1
        try:
            workers = int(value)
        except ValueError:
            raise ValueError('{0} must be an integer, got "{1}"'
                             .format(WORKERS_ENV, value))
    if workers < 1:
        raise ValueError('worker count must be >= 1, got {0}'.format(workers))
    return workers


def parallel_map(func, items, workers=None):
    """
    Map ``func`` over ``items`` with a bounded thread pool.

    Results come back in input order whatever the completion order.
    """
    items = list(items)
    workers = min(worker_count(workers), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def row_blocks(n_rows, block_size):
    """Consecutive ``range`` blocks covering ``n_rows`` rows."""
    block_size = max(int(block_size), 1)
    return [range(start, min(start + block_size, n_rows))
            for start in range(0, n_rows, block_size)]

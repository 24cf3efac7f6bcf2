"""
The classical matching estimator.

Each subject's unobserved potential outcome is estimated by the mean
outcome of its nearest subjects (covariate cosine) in the opposite
treatment group; per-subject effects are then averaged into ATE, ATT or
ATC.
"""
import logging
import math

import numpy as np
import pandas as pd

from .data import SparseBinaryMatrix
from .similarity import intersection_matrix, order_key

log = logging.getLogger(__name__)

PANEL_COLUMNS = ['id', 'z', 'y']
MODES = ('ATE', 'ATT', 'ATC')


def _binary(name, values):
    values = np.asarray(values)
    if values.ndim != 1 or not np.isin(values, (0, 1)).all():
        raise ValueError('{0} must be a 0/1 vector'.format(name))
    return values.astype(np.int8)


class SubjectPanel(object):
    """
    Observed outcomes, treatments and binary covariates of a set of
    subjects.

    Parameters
    ----------
    y, z: array-like of 0/1
    covariates: SparseBinaryMatrix or 2-D 0/1 array, one row per subject
    ids: list of str, optional
    """

    def __init__(self, y, z, covariates, ids=None):
        self.y = _binary('y', y)
        self.z = _binary('z', z)
        if not isinstance(covariates, SparseBinaryMatrix):
            covariates = SparseBinaryMatrix.from_dense(
                np.asarray(covariates).reshape(len(self.y), -1))
        self.covariates = covariates
        n = len(self.y)
        if len(self.z) != n or covariates.n_rows != n:
            raise ValueError('y, z and covariates must be aligned, got '
                             '{0}, {1} and {2} subjects'.format(
                                 n, len(self.z), covariates.n_rows))
        self.ids = [str(i) for i in (ids if ids is not None else range(n))]
        if len(self.ids) != n:
            raise ValueError('ids must be aligned with the subjects')

    def __len__(self):
        return len(self.y)

    @property
    def treated(self):
        return np.flatnonzero(self.z == 1)

    @property
    def control(self):
        return np.flatnonzero(self.z == 0)


class MatchedSets(object):
    """Per-subject index arrays of treated and control matches."""

    def __init__(self, treated, control):
        self.treated = [np.asarray(t, dtype=np.int64) for t in treated]
        self.control = [np.asarray(c, dtype=np.int64) for c in control]
        if len(self.treated) != len(self.control):
            raise ValueError('treated and control match lists differ in '
                             'length')

    def __len__(self):
        return len(self.treated)


def _nearest(keys, group, m):
    if not len(group):
        return [np.zeros(0, dtype=np.int64)] * sims.shape[0]
    # stable sort keeps ascending subject index among equal similarities
    order = np.argsort(-keys[:, group], axis=1, kind='stable')[:, :m]
    return list(group[order])


def match_subjects(panel, m=1):
    """
    Match every subject to its ``m`` nearest treated and ``m`` nearest
    control subjects by covariate cosine (ties by ascending index). A
    subject may match itself within its own group.
    """
    if m < 1:
        raise ValueError('m must be >= 1, got {0}'.format(m))
    treated, control = panel.treated, panel.control
    for name, group in (('treated', treated), ('control', control)):
        if not len(group):
            raise ValueError('the {0} group is empty; nothing to match '
                             'against'.format(name))
    cov = panel.covariates
    keys = order_key(intersection_matrix(cov, cov), cov.row_nnz()[None, :])
    return MatchedSets(_nearest(keys, treated, m),
                       _nearest(keys, control, m))


def estimate_counterfactuals(panel, matches):
    """
    Mean outcome over each subject's treated and control matches.

    Returns
    -------
    (y_t_hat, y_c_hat): float arrays, one value per subject
    """
    if len(matches) != len(panel):
        raise ValueError('{0} matched sets for {1} subjects'.format(
            len(matches), len(panel)))
    y_t = np.empty(len(panel))
    y_c = np.empty(len(panel))
    for n, (t, c) in enumerate(zip(matches.treated, matches.control)):
        if not len(t) or not len(c):
            raise ValueError('subject {0} has an empty matched set'
                             .format(panel.ids[n]))
        y_t[n] = (panel.z[t] * panel.y[t]).mean()
        y_c[n] = ((1 - panel.z[c]) * panel.y[c]).mean()
    return y_t, y_c


def per_subject_effect(panel, y_t_hat, y_c_hat):
    """tau_hat = Z (Y - y_c_hat) + (1 - Z) (y_t_hat - Y)."""
    z = panel.z.astype(float)
    y = panel.y.astype(float)
    return z * (y - np.asarray(y_c_hat)) + (1 - z) * (np.asarray(y_t_hat) - y)


def aggregate(tau_hat, mode='ATE', z=None):
    """
    Average per-subject effects.

    Parameters
    ----------
    tau_hat: array of float
    mode: 'ATE' (all subjects), 'ATT' (treated) or 'ATC' (control)
    z: array of 0/1
        Treatments; required for ATT and ATC.
    """
    tau_hat = np.asarray(tau_hat, dtype=float)
    mode = mode.upper()
    if mode not in MODES:
        raise ValueError('mode must be one of {0}, got "{1}"'
                         .format(list(MODES), mode))
    if mode == 'ATE':
        selected = tau_hat
    else:
        if z is None:
            raise ValueError('{0} needs the treatments'.format(mode))
        z = np.asarray(z)
        if z.shape != tau_hat.shape:
            raise ValueError('z and tau_hat must be aligned')
        selected = tau_hat[z == (1 if mode == 'ATT' else 0)]
    if not len(selected):
        raise ValueError('{0} is undefined: no {1}'.format(
            mode, {'ATE': 'subjects', 'ATT': 'treated subjects',
                   'ATC': 'control subjects'}[mode]))
    return math.fsum(selected) / len(selected)


def load_panel(path):
    """
    Read a subject panel from CSV: columns id, z, y followed by binary
    covariate columns.
    """
    frame = pd.read_csv(path, dtype={'id': str}, keep_default_na=False)
    if list(frame.columns[:3]) != PANEL_COLUMNS:
        raise ValueError('{0}: expected leading columns {1}, got {2}'.format(
            path, PANEL_COLUMNS, list(frame.columns[:3])))
    covariates = frame.iloc[:, 3:]
    for col in ['z', 'y'] + list(covariates.columns):
        values = pd.to_numeric(frame[col], errors='coerce')
        bad = ~values.isin([0, 1])
        if bad.any():
            # data rows start on line 2
            raise ValueError('{0}: line {1}: column "{2}" must be 0 or 1'
                             .format(path, int(np.flatnonzero(bad)[0]) + 2,
                                     col))
    cov = covariates.apply(pd.to_numeric).values.astype(np.int8) \
        if covariates.shape[1] else np.zeros((len(frame), 0), np.int8)
    return SubjectPanel(frame['y'].astype(int).values,
                        frame['z'].astype(int).values,
                        SparseBinaryMatrix.from_dense(cov),
                        ids=frame['id'].tolist())


def estimate_effects(panel, m=1):
    """
    Run matching, counterfactual estimation and aggregation.

    Returns
    -------
    frame: pandas.DataFrame
        Columns id, z, y, y_t_hat, y_c_hat, tau_hat.
    summary: dict
        ATE, ATT and ATC.
    """
    matches = match_subjects(panel, m=m)
    y_t, y_c = estimate_counterfactuals(panel, matches)
    tau = per_subject_effect(panel, y_t, y_c)
    frame = pd.DataFrame({'id': panel.ids, 'z': panel.z, 'y': panel.y,
                          'y_t_hat': y_t, 'y_c_hat': y_c, 'tau_hat': tau})
    summary = {mode: aggregate(tau, mode, panel.z) for mode in MODES}
    log.info('matched %d subjects (m=%d): ATE=%.6g', len(panel), m,
             summary['ATE'])
    return frame, summary

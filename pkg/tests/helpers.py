"""Shared test utilities: finite-difference gradient checking and tree fixtures."""

import numpy as np

from tground import autodiff as ad

FD_STEP = 1e-5
FD_RTOL = 1e-4
FD_ATOL = 1e-8  # floor for finite-difference cancellation noise


def gradcheck(build_loss, params, step=FD_STEP, rtol=FD_RTOL, atol=FD_ATOL):
    """Compare analytic gradients of build_loss() against central differences.

    `build_loss` must recompute the scalar loss from the params' current data;
    it is called once under a tape and twice per perturbed element.
    """
    for p in params:
        p.zero_grad()
    with ad.Tape() as tape:
        loss = build_loss()
        ad.backward(tape, loss)
    failures = []
    for p in params:
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(build_loss().data)
            flat[i] = orig - step
            down = float(build_loss().data)
            flat[i] = orig
            fd = (up - down) / (2 * step)
            an = analytic.reshape(-1)[i]
            if abs(fd - an) > rtol * max(abs(fd), abs(an)) + atol:
                failures.append((p.name, i, fd, an))
    assert not failures, f"gradient mismatches: {failures[:5]}"


# (ptb string, expected word-index sets per surviving sub-event, clause count)
TREE_FIXTURES = [
    ("(S (NP (DT the) (NN dog)) (VP (VBZ runs)))", [[0, 1, 2]], 1),
    ("(S (NP (DT the) (NN man)) (VP (VBZ waves) (SBAR (IN before) "
     "(S (NP (PRP he)) (VP (VBZ falls))))))", [[0, 1, 2], [4, 5]], 3),
    ("(S (NP (DT the) (NN man)) (VP (VBZ waves) (SBAR (IN after) "
     "(S (NP (PRP he)) (VP (VBZ eats))))))", [[0, 1, 2], [4, 5]], 3),
    ("(NP (DT the) (NN dog))", [[0, 1]], 0),
    ("(S (S (NN a) (NN b)) (S (NN c) (NN d)))", [[0, 1], [2, 3]], 3),
    ("(S (NN hi))", [[0]], 1),
    ("(FRAG (NP (DT the) (NN dog)) (PP (IN in) (NP (DT the) (NN park))))",
     [[0, 1, 2, 3, 4]], 1),
    ("(SINV (VBZ is) (NP (DT the) (NN dog)))", [[0, 1, 2]], 1),
    ("(S (S-TPC (NN a) (NN b)) (NN c))", [[0, 1]], 2),
    ("(S=2 (NN a) (NN b))", [[0, 1]], 1),
    ("(SQ (VBZ is) (NP (DT the) (NN dog)))", [[0, 1, 2]], 0),
    ("(SBARQ (WHNP (WP what)) (SQ (VBZ is) (NP (PRP it))))", [[0, 1, 2]], 0),
    ("(S (NN x) (SBAR (IN that) (S (NN y) (NN z))))", [[2, 3]], 3),
    ("(S (NN a) (SBAR (NN b) (NN c)) (NN d))", [[0, 3], [1, 2]], 2),
    ("(S(NN a)(NN b))", [[0, 1]], 1),
    ("(S (NN a) (S (NN b) (S (NN c) (NN d)) (NN e)))", [[1, 4], [2, 3]], 3),
    ("(S (S (NN a)) (S (NN b)))", [[0, 1]], 3),
    ("(S (S (NN a) (NN b)) (CC and) (S (NN c) (NN d)))", [[0, 1], [3, 4]], 3),
    ("(FRAG-ADV (NN a) (NN b))", [[0, 1]], 1),
    ("(S (NN a) (NN b) (SBAR (IN if) (NN c)))", [[0, 1], [2, 3]], 2),
    # seven surviving two-word clauses: keep the first six
    ("(S " + " ".join(f"(S (NN w{2*i}) (NN w{2*i+1}))" for i in range(7)) + ")",
     [[2 * i, 2 * i + 1] for i in range(6)], 8),
    # seven clauses of mixed size: the lone two-word clause loses the cut
    ("(S (S (NN a) (NN b)) " +
     " ".join(f"(S (NN x{3*i}) (NN x{3*i+1}) (NN x{3*i+2}))" for i in range(6)) + ")",
     [[2 + 3 * i, 3 + 3 * i, 4 + 3 * i] for i in range(6)], 8),
]


def masks_to_index_sets(masks):
    return [sorted(np.nonzero(row)[0].tolist()) for row in masks]

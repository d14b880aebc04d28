"""Residual quantities, distance-dependent dual weights, and the
assembled flux-error estimators.

The dual weight of an element shrinks like (h_T / rho_T)^k with the
distance rho_T of its vertex patch to the boundary, so bulk residuals
are progressively discounted while boundary residuals keep full weight.
The classical unweighted estimator is kept as a comparison baseline.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .methods import BARBOSA_HUGHES, LAGRANGE, NITSCHE
from .quadrature import segment_rule, triangle_rule


@dataclass
class WeightConfig:
    """Constants of the element weight min{C1, C2 (h_T/rho_T)^k}."""

    c1: float = 1.0
    c2: float = 1.0
    k: int = 1

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("weight constants must be positive")


def weight_element(h_T, rho_T, config):
    """Dual weight per element; the rho = 0 branch returns C1 exactly."""
    h_T = np.asarray(h_T, dtype=float)
    rho_T = np.asarray(rho_T, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        ratio = np.where(rho_T > 0.0,
                         config.c2 * (h_T / np.maximum(rho_T, 1e-300))
                         ** config.k,
                         np.inf)
    return np.where(rho_T > 0.0, np.minimum(config.c1, ratio), config.c1)


def weight_facet(sigma_T, sigma_Tp):
    """Facet weight: the smaller of the two incident element weights."""
    return np.minimum(sigma_T, sigma_Tp)


@dataclass
class Residuals:
    """Raw residual quantities of a discrete solution (no weights)."""

    r1T: np.ndarray          # h_T ||f + div(a grad u_h)||_T
    interior_edges: np.ndarray
    r0F: np.ndarray          # h^1/2 ||jump of a dn(u_h)||_F, per interior edge
    r1F: np.ndarray          # h^1/2 ||lambda_h - a dn(u_h)||_F, per boundary facet
    r2F: np.ndarray          # h^1/2 |g - u_h|_1,F
    r3F: np.ndarray          # h^-1/2 ||u_h - g||_F
    patch_sq: np.ndarray     # (nbf, 2): r(F,P)^2 for the left/right vertex of F


@dataclass
class IndicatorField:
    """Per-entity residuals, weights, and the assembled estimators."""

    residuals: Residuals
    sigma_T: np.ndarray
    sigma_F: np.ndarray
    eta_T: np.ndarray
    eta: float
    eta_T_classical: np.ndarray
    eta_classical: float


def compute_residuals(solution, distance=None, degree=None):
    """Evaluate all local residuals of `solution` on its mesh.

    The volume term expands div(a grad u_h) = a lap(u_h) + grad(a).grad(u_h)
    elementwise; boundary seminorms differentiate along the facet.
    """
    space = solution.space
    mesh = space.mesh
    problem = solution.problem
    k = space.order
    if degree is None:
        degree = 2 * k + 4

    r1T = _volume_residual(solution, degree)
    r0F = _flux_jumps(solution, degree)
    r1F, r2F, r3F = _boundary_residuals(solution, degree)
    patch_sq = _patch_terms(solution, degree)
    return Residuals(r1T, mesh.interior_edges, r0F, r1F, r2F, r3F, patch_sq)


def _volume_residual(solution, degree):
    space, problem = solution.space, solution.problem
    mesh = space.mesh
    qp, qw = triangle_rule(degree)
    el = space.element
    href = el.hess(qp)          # (nq, nd, 3)
    gref = el.grad(qp)          # (nq, nd, 2)
    out = np.empty(mesh.num_triangles)
    for blk in fem._blocks(mesh.num_triangles):
        J, invJT, det = mesh.jacobians(blk)
        Minv = np.einsum("tac,tad->tcd", invJT, invJT)
        lap = (Minv[:, None, None, 0, 0] * href[None, :, :, 0]
               + 2.0 * Minv[:, None, None, 0, 1] * href[None, :, :, 1]
               + Minv[:, None, None, 1, 1] * href[None, :, :, 2])
        gphys = np.einsum("tab,qjb->tqja", invJT, gref)
        co = solution.coeffs[space.tri_dofs[blk]]
        lap_u = np.einsum("tj,tqj->tq", co, lap)
        grad_u = np.einsum("tj,tqja->tqa", co, gphys)
        pts = mesh.triangle_points(blk, qp)
        x, y = pts[..., 0], pts[..., 1]
        ga = problem.grad_a(x, y)
        res = (problem.f(x, y) + problem.a(x, y) * lap_u
               + ga[..., 0] * grad_u[..., 0] + ga[..., 1] * grad_u[..., 1])
        out[blk] = np.sqrt(np.einsum("tq,tq,q,t->t", res, res, qw, det))
    return mesh.h_T * out


def _flux_jumps(solution, degree):
    space, problem = solution.space, solution.problem
    mesh = space.mesh
    edges = mesh.interior_edges
    if len(edges) == 0:
        return np.zeros(0)
    t, w = segment_rule(degree)
    nq = len(t)
    P = mesh.vertices[mesh.edges[edges, 0]]
    Q = mesh.vertices[mesh.edges[edges, 1]]
    pts = P[:, None, :] + t[None, :, None] * (Q - P)[:, None, :]
    L = mesh.edge_length[edges]
    nrm = np.stack([(Q - P)[:, 1], -(Q - P)[:, 0]], axis=-1) / L[:, None]
    flat = pts.reshape(-1, 2)
    jump = np.zeros(len(edges) * nq)
    for side in range(2):
        tri = mesh.edge_tris[edges, side]
        gu = _grad_at_physical(space, solution.coeffs,
                               np.repeat(tri, nq), flat)
        sgn = 1.0 if side == 0 else -1.0
        jump += sgn * np.einsum("na,na->n",
                                gu, np.repeat(nrm, nq, axis=0))
    av = problem.a(flat[:, 0], flat[:, 1])
    val = (av * jump).reshape(len(edges), nq)
    norm_sq = np.einsum("nq,nq,q->n", val, val, w) * L
    return np.sqrt(L) * np.sqrt(norm_sq)


def _grad_at_physical(space, coeffs, tri_ids, pts):
    """Gradient of the coefficient function at physical points inside
    the given triangles."""
    mesh = space.mesh
    p0 = mesh.vertices[mesh.triangles[tri_ids, 0]]
    J, invJT, _ = mesh.jacobians(tri_ids)
    d = pts - p0
    # reference coords: J^{-1} d  (invJT is J^{-T})
    ref = np.einsum("nba,nb->na", invJT, d)
    g = space.element.grad(ref)
    gphys = np.einsum("nab,njb->nja", invJT, g)
    return np.einsum("nj,nja->na", coeffs[space.tri_dofs[tri_ids]], gphys)


def _boundary_residuals(solution, degree):
    mesh = solution.mesh
    problem = solution.problem
    nbf = mesh.num_boundary_facets
    t, w = segment_rule(degree)
    nq = len(t)
    facets = np.arange(nbf)
    frep = np.repeat(facets, nq)
    trep = np.tile(t, nbf)
    L = mesh.bf_len

    uv = solution.trace_values(frep, trep)
    pts = mesh.boundary_points(frep, trep)
    gv = problem.g(pts[:, 0], pts[:, 1])
    diff = (uv - gv).reshape(nbf, nq)
    l2_sq = np.einsum("nq,nq,q->n", diff, diff, w) * L
    r3F = np.sqrt(l2_sq / L)

    dgt = problem.g_tangential(mesh)(frep, trep)
    _, grads, dofs = fem.facet_point_basis(solution.space, frep, trep,
                                           gradients=True)
    gu = np.einsum("nj,nja->na", solution.coeffs[dofs], grads)
    tang = mesh.bf_tangent[frep]
    dut = gu[:, 0] * tang[:, 0] + gu[:, 1] * tang[:, 1]
    tdiff = (dgt - dut).reshape(nbf, nq)
    r2F = np.sqrt(L) * np.sqrt(np.einsum("nq,nq,q->n", tdiff, tdiff, w) * L)

    if solution.method == NITSCHE:
        r1F = solution.gamma * r3F
    else:
        lam = solution.flux_values(frep, trep)
        anu = solution.trace_normal_flux(frep, trep)
        mis = (lam - anu).reshape(nbf, nq)
        r1F = np.sqrt(L) * np.sqrt(np.einsum("nq,nq,q->n", mis, mis, w) * L)
    return r1F, r2F, r3F


def _patch_terms(solution, degree):
    """r(F,P)^2 for both vertices of every boundary facet.

    For each boundary vertex P the data g is L2-projected onto the
    continuous piecewise linears of its two-facet patch; the facet then
    carries h^-1 ||u_h - g_h^P||_F^2 + h |g_h^P - g|_1,F^2.
    """
    mesh = solution.mesh
    problem = solution.problem
    nbf = mesh.num_boundary_facets
    t, w = segment_rule(max(degree, 6))
    nq = len(t)
    facets = np.arange(nbf)
    frep = np.repeat(facets, nq)
    trep = np.tile(t, nbf)
    L = mesh.bf_len

    pts = mesh.boundary_points(frep, trep)
    gv = problem.g(pts[:, 0], pts[:, 1]).reshape(nbf, nq)
    dgt = problem.g_tangential(mesh)(frep, trep).reshape(nbf, nq)
    uv = solution.trace_values(frep, trep).reshape(nbf, nq)

    phi = np.stack([1.0 - t, t], axis=1)                    # (nq, 2)
    Mloc = np.einsum("qi,qj,q->ij", phi, phi, w)[None] * L[:, None, None]
    bloc = np.einsum("nq,qi,q->ni", gv, phi, w) * L[:, None]

    # vertex j of the boundary loop starts facet j; its patch is
    # (facet j-1, facet j)
    prev = (facets - 1) % nbf
    M = np.zeros((nbf, 3, 3))
    b = np.zeros((nbf, 3))
    M[:, :2, :2] += Mloc[prev]
    M[:, 1:, 1:] += Mloc[facets]
    b[:, :2] += bloc[prev]
    b[:, 1:] += bloc[facets]
    coeffs = np.linalg.solve(M, b[:, :, None])[:, :, 0]     # (nbv, 3)

    patch_sq = np.empty((nbf, 2))
    for slot in range(2):
        if slot == 0:   # P = left vertex of F: F is the patch's second facet
            ca = coeffs[facets, 1]
            cb = coeffs[facets, 2]
        else:           # P = right vertex of F: F is the patch's first facet
            nxt = (facets + 1) % nbf
            ca = coeffs[nxt, 0]
            cb = coeffs[nxt, 1]
        gh = ca[:, None] * (1.0 - t)[None, :] + cb[:, None] * t[None, :]
        dgh = ((cb - ca) / L)[:, None]
        # h^-1 * integral cancels one length factor; h * integral gains one
        term0 = np.einsum("nq,q->n", (uv - gh) ** 2, w)
        term1 = np.einsum("nq,q->n", (dgh - dgt) ** 2, w) * L * L
        patch_sq[:, slot] = term0 + term1
    return patch_sq


def element_weights(mesh, distance, config):
    return weight_element(mesh.h_T, distance.rho, config)


def assemble_eta(residuals, sigma_T, mesh, method, gamma=None, alpha=None,
                 include_patch_terms=True):
    """Distance-weighted estimator: per-element eta_T and global eta.

    Interior facet terms enter both incident elements; the global value
    is sqrt(sum eta_T^2) with that convention.  The boundary load is
    method specific: r1^2 + r2^2 for the multiplier method,
    (1+gamma^2) r3^2 plus patch terms for Nitsche, (1+alpha^2) r1^2 plus
    patch terms for the stabilized multiplier method.  Patch terms are
    attributed half-and-half to the two facets of each vertex patch.
    """
    r = residuals
    eta_sq = (sigma_T * r.r1T) ** 2

    edges = r.interior_edges
    tris = mesh.edge_tris[edges]
    sigma_F = weight_facet(sigma_T[tris[:, 0]], sigma_T[tris[:, 1]])
    contrib = (sigma_F * r.r0F) ** 2
    np.add.at(eta_sq, tris[:, 0], contrib)
    np.add.at(eta_sq, tris[:, 1], contrib)

    bload = _boundary_load(r, mesh, method, gamma, alpha,
                           include_patch_terms)
    np.add.at(eta_sq, mesh.bf_tri, bload)
    eta_T = np.sqrt(eta_sq)
    return eta_T, float(np.sqrt(eta_sq.sum())), sigma_F


def _boundary_load(r, mesh, method, gamma, alpha, include_patch_terms):
    nbf = mesh.num_boundary_facets
    if method == LAGRANGE:
        return r.r1F ** 2 + r.r2F ** 2
    S_vertex = r.patch_sq[(np.arange(nbf) - 1) % nbf, 1] + r.patch_sq[:, 0]
    patch = 0.5 * (S_vertex + S_vertex[(np.arange(nbf) + 1) % nbf])
    if not include_patch_terms:
        patch = 0.0
    if method == NITSCHE:
        if gamma is None:
            raise ValueError("gamma required for the Nitsche estimator")
        return (1.0 + gamma ** 2) * r.r3F ** 2 + patch
    if method == BARBOSA_HUGHES:
        if alpha is None:
            raise ValueError("alpha required for the stabilized estimator")
        return (1.0 + alpha ** 2) * r.r1F ** 2 + patch
    raise ValueError(f"unknown method {method!r}")


def assemble_eta_classical(residuals, mesh, method, gamma=None):
    """Unweighted residual estimator (energy-norm driven baseline)."""
    r = residuals
    eta_sq = r.r1T ** 2
    tris = mesh.edge_tris[r.interior_edges]
    contrib = r.r0F ** 2
    np.add.at(eta_sq, tris[:, 0], contrib)
    np.add.at(eta_sq, tris[:, 1], contrib)
    if method in (LAGRANGE, BARBOSA_HUGHES):
        bload = r.r1F ** 2 + r.r3F ** 2
    elif method == NITSCHE:
        if gamma is None:
            raise ValueError("gamma required for the Nitsche estimator")
        bload = gamma ** 2 * r.r3F ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    np.add.at(eta_sq, mesh.bf_tri, bload)
    eta_T = np.sqrt(eta_sq)
    return eta_T, float(np.sqrt(eta_sq.sum()))


def build_indicators(solution, distance, config, include_patch_terms=True,
                     degree=None):
    """Residuals, weights and both estimators in one pass."""
    mesh = solution.mesh
    res = compute_residuals(solution, degree=degree)
    sigma_T = element_weights(mesh, distance, config)
    eta_T, eta, sigma_F = assemble_eta(
        res, sigma_T, mesh, solution.method,
        gamma=solution.gamma, alpha=solution.alpha,
        include_patch_terms=include_patch_terms)
    eta_T_c, eta_c = assemble_eta_classical(
        res, mesh, solution.method, gamma=solution.gamma)
    return IndicatorField(res, sigma_T, sigma_F, eta_T, eta, eta_T_c, eta_c)


def dump_indicators(field, mesh, distance, path):
    """CSV dump: element_id, h_T, rho_T, sigma_T, r1T, etaT."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("element_id,h_T,rho_T,sigma_T,r1T,etaT\n")
        for i in range(mesh.num_triangles):
            fh.write(f"{i},{mesh.h_T[i]:.17g},{distance.rho[i]:.17g},"
                     f"{field.sigma_T[i]:.17g},{field.residuals.r1T[i]:.17g},"
                     f"{field.eta_T[i]:.17g}\n")

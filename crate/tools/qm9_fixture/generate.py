"""Generate a small QM9-format extended-XYZ fixture.

Molecules are random small organics (C, N, O, F plus H, at most 9 heavy
atoms) grown by mutating seed SMILES with RDKit. Geometries come from
ETKDG + MMFF. Properties are computed with pyscf at HF/STO-3G:

  mu     dipole moment (Debye)
  alpha  isotropic polarizability by finite field (Bohr^3)
  homo, lumo, gap (Hartree)
  r2     electronic spatial extent (Bohr^2)
  zpve, U0, U, H, G, Cv from a harmonic frequency analysis at 298.15 K

The level of theory is far below QM9's B3LYP/6-31G(2df,p); the values are
physically coupled to structure, which is all the test-suite needs.

Usage: python generate.py OUT.xyz N SEED

An existing OUT.xyz is resumed rather than overwritten.
"""
import random
import sys

import numpy as np
from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem
from pyscf import gto, scf
from pyscf.hessian import thermo

RDLogger.DisableLog("rdApp.*")

SEEDS = ["C", "CC", "CO", "CN", "C=O", "CC#N", "OCC=O", "c1ccccc1", "C1CC1",
         "CCO", "CC(=O)N", "C1=CC=CN1", "OC(F)F", "C1COC1", "NC=O", "CC=C"]
HEAVY = ["C", "C", "C", "N", "O", "F"]
FIELD = 1e-3


def mutate(rng, mol):
    rw = Chem.RWMol(mol)
    op = rng.random()
    atoms = [a.GetIdx() for a in rw.GetAtoms() if a.GetImplicitValence() > 0 or a.GetNumImplicitHs() > 0]
    if not atoms:
        return None
    if op < 0.65:
        el = rng.choice(HEAVY)
        new = rw.AddAtom(Chem.Atom(el))
        rw.AddBond(rng.choice(atoms), new, Chem.BondType.SINGLE)
    elif op < 0.8 and len(atoms) >= 2:
        a, b = rng.sample(atoms, 2)
        if rw.GetBondBetweenAtoms(a, b) is None:
            rw.AddBond(a, b, Chem.BondType.SINGLE)
    elif op < 0.9:
        bonds = list(rw.GetBonds())
        if bonds:
            bd = rng.choice(bonds)
            if bd.GetBondType() == Chem.BondType.SINGLE:
                bd.SetBondType(Chem.BondType.DOUBLE)
    else:
        a = rng.choice(atoms)
        atom = rw.GetAtomWithIdx(a)
        if atom.GetSymbol() == "C" and atom.GetDegree() <= 2:
            atom.SetAtomicNum(rng.choice([7, 8]))
    try:
        m = rw.GetMol()
        Chem.SanitizeMol(m)
        return m
    except Exception:
        return None


def enumerate_smiles(rng, n):
    seen = []
    pool = [Chem.MolFromSmiles(s) for s in SEEDS]
    for s in SEEDS:
        c = Chem.MolToSmiles(Chem.MolFromSmiles(s))
        if c not in seen:
            seen.append(c)
    while len(seen) < n:
        base = rng.choice(pool)
        m = mutate(rng, base)
        if m is None or m.GetNumHeavyAtoms() > 9:
            continue
        ri = m.GetRingInfo()
        if any(len(r) < 3 for r in ri.AtomRings()):
            continue
        smi = Chem.MolToSmiles(m)
        if smi in seen:
            continue
        seen.append(smi)
        pool.append(m)
    return seen


def embed(smi, seed):
    m = Chem.AddHs(Chem.MolFromSmiles(smi))
    if AllChem.EmbedMolecule(m, randomSeed=seed) != 0:
        return None
    AllChem.MMFFOptimizeMolecule(m, maxIters=500)
    return m


def rotational_constants(mol):
    masses = np.array(mol.atom_mass_list(isotope_avg=True))
    xyz = mol.atom_coords(unit="Angstrom")
    com = (masses[:, None] * xyz).sum(0) / masses.sum()
    r = xyz - com
    inertia = np.zeros((3, 3))
    for m, v in zip(masses, r):
        inertia += m * (np.dot(v, v) * np.eye(3) - np.outer(v, v))
    ev = np.sort(np.linalg.eigvalsh(inertia))
    # h / (8 pi^2 I), I in amu*A^2 -> GHz
    conv = 505.379005
    return [conv / e if e > 1e-8 else 0.0 for e in ev]


def fmt(x):
    s = "%.6E" % x
    mant, exp = s.split("E")
    return "%s*^%d" % (mant, int(exp)) if abs(x) < 1e-4 and x != 0 else "%.6f" % x


def compute(m, idx):
    conf = m.GetConformer()
    atoms = [(a.GetSymbol(), tuple(conf.GetAtomPosition(a.GetIdx()))) for a in m.GetAtoms()]
    mol = gto.M(atom=atoms, basis="sto-3g", unit="Angstrom", verbose=0)
    mf = scf.RHF(mol).run()
    if not mf.converged:
        return None
    nocc = mol.nelectron // 2
    homo, lumo = mf.mo_energy[nocc - 1], mf.mo_energy[nocc]
    dip = np.linalg.norm(mf.dip_moment(verbose=0))
    dm = mf.make_rdm1()
    r2 = np.einsum("ij,ji", mol.intor("int1e_r2"), dm)
    h1 = mf.get_hcore()
    ints = mol.intor("int1e_r")
    alpha = 0.0
    d0 = mf.dip_moment(unit="AU", verbose=0)
    for k in range(3):
        mff = scf.RHF(mol)
        mff.get_hcore = lambda *a, k=k: h1 + FIELD * ints[k]
        mff.kernel(dm0=dm)
        dk = mff.dip_moment(unit="AU", verbose=0)
        alpha += (dk[k] - d0[k]) / FIELD
    alpha /= 3.0
    hess = mf.Hessian().kernel()
    freq = thermo.harmonic_analysis(mol, hess)
    th = thermo.thermo(mf, freq["freq_au"], 298.15, 101325)
    cv = th["Cv_tot"][0] * 627.5095 * 1000.0 / 1.0
    zpve = th["ZPE"][0]
    rot = rotational_constants(mol)
    homo, lumo = round(homo, 4), round(lumo, 4)
    props = [fmt(rot[0]), fmt(rot[1]), fmt(rot[2]), fmt(round(dip, 4)), "%.2f" % alpha,
             "%.4f" % homo, "%.4f" % lumo, "%.4f" % (lumo - homo), "%.4f" % r2,
             "%.6f" % zpve, "%.6f" % th["E_0K"][0], "%.6f" % th["E_tot"][0],
             "%.6f" % th["H_tot"][0], "%.6f" % th["G_tot"][0], "%.3f" % cv]
    charges = mf.mulliken_pop(verbose=0)[1]
    freqs = [f for f in np.real(freq["freq_wavenumber"])]
    return atoms, props, charges, freqs


def main():
    out, n, seed = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
    rng = random.Random(seed)
    smiles = enumerate_smiles(rng, n * 2)
    done = set()
    try:
        with open(out) as fh:
            lines = fh.read().splitlines()
        k = 0
        while k < len(lines) and lines[k].strip().isdigit():
            na = int(lines[k])
            done.add(lines[k + na + 3].split("\t")[0])
            k += na + 5
    except FileNotFoundError:
        pass
    written = len(done)
    with open(out, "a") as fh:
        for smi in smiles:
            if written >= n:
                break
            if smi in done:
                continue
            m = embed(smi, seed)
            if m is None or m.GetNumAtoms() > 29:
                continue
            res = compute(m, written + 1)
            if res is None:
                continue
            atoms, props, charges, freqs = res
            written += 1
            fh.write("%d\n" % len(atoms))
            fh.write("gdb %d\t" % written + "\t".join(props) + "\t\n")
            for (el, (x, y, z)), q in zip(atoms, charges):
                fh.write("%s\t%s\t%s\t%s\t%s\n" % (el, fmt(x), fmt(y), fmt(z), fmt(q)))
            fh.write("\t".join("%.4f" % f for f in freqs) + "\n")
            fh.write("%s\t%s\n" % (smi, smi))
            fh.write("InChI=synthetic\tInChI=synthetic\n")
            fh.flush()
            print(written, smi, flush=True)


if __name__ == "__main__":
    main()

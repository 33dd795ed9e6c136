#!/usr/bin/env python3
"""Regenerates the machine-written benchmark files under problems/.

dectiger.dpomdp and tiger.pomdp are hand-written and not touched here.
"""
import os

OUT = os.path.join(os.path.dirname(__file__), '..', 'problems')


def fmt(p):
    s = f"{p:.12g}"
    return s


# ---------------------------------------------------------------- recycling
def gen_recycling():
    # Two robots collecting trash. Each has a battery (high/low), observed
    # by its owner after every step. Retrieving the large can needs both
    # robots searching for it with high batteries (+5); a small can needs a
    # single robot with a high battery (+2). Searching on a low battery
    # risks depletion (-3, robot is rescued and recharged). Recharging is
    # free and deterministic.
    AB, BB = 0.71, 0.3   # searchbig: P(high stays high), P(low stays low)
    AS, BS = 0.65, 0.4   # searchsmall
    RBIG, RSMALL, PEN = 5.0, 2.0, -3.0
    H, L = 0, 1
    BIG, SMALL, RECHARGE = 0, 1, 2
    acts = ['searchbig', 'searchsmall', 'recharge']
    states = ['highhigh', 'highlow', 'lowhigh', 'lowlow']
    obs = ['high', 'low']

    def tr(a, b):  # per-robot next-battery distribution
        if a == RECHARGE:
            return {H: 1.0}
        ah, bl = (AB, BB) if a == BIG else (AS, BS)
        if b == H:
            return {H: ah, L: 1.0 - ah}
        return {L: bl, H: 1.0 - bl}

    def dep(a, b):  # depletion probability
        if a == RECHARGE or b == H:
            return 0.0
        return 1.0 - (BB if a == BIG else BS)

    lines = []
    lines.append('# Two recycling robots with private battery levels.')
    lines.append('agents: 2')
    lines.append('discount: 0.9')
    lines.append('values: reward')
    lines.append('states: ' + ' '.join(states))
    lines.append('start:')
    lines.append('1.0 0.0 0.0 0.0')
    lines.append('actions:')
    lines.append(' '.join(acts))
    lines.append(' '.join(acts))
    lines.append('observations:')
    lines.append(' '.join(obs))
    lines.append(' '.join(obs))
    for a1 in range(3):
        for a2 in range(3):
            lines.append(f'T: {acts[a1]} {acts[a2]} :')
            for s in range(4):
                b1, b2 = s >> 1, s & 1
                row = [0.0] * 4
                for n1, p1 in tr(a1, b1).items():
                    for n2, p2 in tr(a2, b2).items():
                        row[n1 * 2 + n2] += p1 * p2
                lines.append(' '.join(fmt(p) for p in row))
    # each robot observes its own battery level after the step
    for s in range(4):
        b1, b2 = s >> 1, s & 1
        lines.append(f'O: * : {states[s]} : {obs[b1]} {obs[b2]} : 1.0')
    for s in range(4):
        b1, b2 = s >> 1, s & 1
        for a1 in range(3):
            for a2 in range(3):
                r = 0.0
                if a1 == BIG and a2 == BIG and b1 == H and b2 == H:
                    r += RBIG
                if a1 == SMALL and b1 == H:
                    r += RSMALL
                if a2 == SMALL and b2 == H:
                    r += RSMALL
                r += PEN * (dep(a1, b1) + dep(a2, b2))
                if r != 0.0:
                    lines.append(f'R: {acts[a1]} {acts[a2]} : {states[s]} : * : * : {fmt(r)}')
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------- grid3x3
def gen_grid3x3():
    # Two agents on a 3x3 grid try to sit together on one of two goal
    # corners (top-left or bottom-right). Moves succeed with probability
    # 0.8, otherwise the agent slips sideways or stays. Each agent observes
    # its own cell exactly.
    P = 0.8
    acts = ['up', 'down', 'left', 'right', 'stay']
    cells = [f'c{i}' for i in range(9)]
    states = [f's{p1}{p2}' for p1 in range(9) for p2 in range(9)]

    def step(p, a):
        r, c = divmod(p, 3)
        if a == 0:
            r = max(0, r - 1)
        elif a == 1:
            r = min(2, r + 1)
        elif a == 2:
            c = max(0, c - 1)
        elif a == 3:
            c = min(2, c + 1)
        return r * 3 + c

    def move(p, a):
        if a == 4:
            return {p: 1.0}
        d = {step(p, a): P}
        perp = (2, 3) if a in (0, 1) else (0, 1)
        for q in (p, step(p, perp[0]), step(p, perp[1])):
            d[q] = d.get(q, 0.0) + (1.0 - P) / 3.0
        return d

    lines = []
    lines.append('# Two agents meeting on the goal corners of a 3x3 grid.')
    lines.append('agents: 2')
    lines.append('discount: 0.9')
    lines.append('values: reward')
    lines.append('states: ' + ' '.join(states))
    lines.append('start:')
    lines.append(states[0 * 9 + 8])  # agent 1 top-left, agent 2 bottom-right
    lines.append('actions:')
    lines.append(' '.join(acts))
    lines.append(' '.join(acts))
    lines.append('observations:')
    lines.append(' '.join(cells))
    lines.append(' '.join(cells))
    for a1 in range(5):
        for a2 in range(5):
            for p1 in range(9):
                m1 = move(p1, a1)
                for p2 in range(9):
                    m2 = move(p2, a2)
                    s = f's{p1}{p2}'
                    for q1, pr1 in sorted(m1.items()):
                        for q2, pr2 in sorted(m2.items()):
                            lines.append(
                                f'T: {acts[a1]} {acts[a2]} : {s} : s{q1}{q2} : {fmt(pr1 * pr2)}')
    for p1 in range(9):
        for p2 in range(9):
            lines.append(f'O: * : s{p1}{p2} : c{p1} c{p2} : 1.0')
    for g in (0, 8):
        lines.append(f'R: * : s{g}{g} : * : * : 1.0')
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------- boxpushing
def gen_boxpushing():
    # Two agents on a 2x5 warehouse strip (cells 0..9, row-major). A crate
    # sits at the right end of each row. Pushing a crate alone yields a
    # small reward, pushing together from the same cell yields a large one.
    # Agents sense walls and each other coarsely.
    acts = ['left', 'right', 'push', 'stay']
    obs = ['wall-left', 'wall-right', 'partner-here', 'partner-near', 'clear']
    P = 0.9

    def col(p):
        return p % 5

    def row(p):
        return p // 5

    def step(p, a):
        c = col(p)
        if a == 0:
            c = max(0, c - 1)
        elif a == 1:
            c = min(4, c + 1)
        return row(p) * 5 + c

    def move(p, a):
        if a in (2, 3):
            return {p: 1.0}
        d = {step(p, a): P}
        d[p] = d.get(p, 0.0) + 1.0 - P
        return d

    def observe(p, q):
        # deterministic sensing for agent at p with partner at q
        if p == q:
            return 2
        if abs(col(p) - col(q)) <= 1 and row(p) == row(q):
            return 3
        if col(p) == 0:
            return 0
        if col(p) == 4:
            return 1
        return 4

    lines = []
    lines.append('# Two agents pushing crates at the end of a 2x5 strip.')
    lines.append('agents: 2')
    lines.append('discount: 0.9')
    lines.append('values: reward')
    lines.append('states: ' + ' '.join(f'g{p1}_{p2}' for p1 in range(10) for p2 in range(10)))
    lines.append('start:')
    lines.append('g0_5')
    lines.append('actions:')
    lines.append(' '.join(acts))
    lines.append(' '.join(acts))
    lines.append('observations:')
    lines.append(' '.join(obs))
    lines.append(' '.join(obs))
    for a1 in range(4):
        for a2 in range(4):
            for p1 in range(10):
                m1 = move(p1, a1)
                for p2 in range(10):
                    m2 = move(p2, a2)
                    for q1, pr1 in sorted(m1.items()):
                        for q2, pr2 in sorted(m2.items()):
                            lines.append(f'T: {acts[a1]} {acts[a2]} : g{p1}_{p2} : g{q1}_{q2} : '
                                         f'{fmt(pr1 * pr2)}')
    for p1 in range(10):
        for p2 in range(10):
            o1, o2 = observe(p1, p2), observe(p2, p1)
            lines.append(f'O: * : g{p1}_{p2} : {obs[o1]} {obs[o2]} : 1.0')
    for p1 in range(10):
        for p2 in range(10):
            s = f'g{p1}_{p2}'
            at_crate1 = col(p1) == 4
            at_crate2 = col(p2) == 4
            if at_crate1 and at_crate2 and p1 == p2:
                lines.append(f'R: push push : {s} : * : * : 10.0')
            if at_crate1:
                lines.append(f'R: push left : {s} : * : * : 1.0')
                lines.append(f'R: push right : {s} : * : * : 1.0')
                lines.append(f'R: push stay : {s} : * : * : 1.0')
            if at_crate2:
                lines.append(f'R: left push : {s} : * : * : 1.0')
                lines.append(f'R: right push : {s} : * : * : 1.0')
                lines.append(f'R: stay push : {s} : * : * : 1.0')
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------- marsrover
def gen_marsrover():
    # Two rovers visit four sites and run experiments. An experiment at
    # site k completes when some rover samples there; sites 2 and 3 pay
    # more when sampled by both rovers in the same step. State: rover
    # positions (4x4) and which experiments are done (4 bits) -> 256.
    acts = ['goto0', 'goto1', 'goto2', 'goto3', 'sample', 'wait']
    obs = [f'{site}{r}' for site in ('s0', 's1', 's2', 's3') for r in ('ok', 'noise')]
    P = 0.9

    def move(p, a):
        if a < 4:
            if a == p:
                return {p: 1.0}
            return {a: P, p: 1.0 - P}
        return {p: 1.0}

    def sidx(p1, p2, done):
        return ((p1 * 4) + p2) * 16 + done

    lines = []
    lines.append('# Two rovers running experiments on four sites.')
    lines.append('agents: 2')
    lines.append('discount: 0.9')
    lines.append('values: reward')
    lines.append('states: 256')
    lines.append('start:')
    lines.append(str(sidx(0, 1, 0)))
    lines.append('actions:')
    lines.append(' '.join(acts))
    lines.append(' '.join(acts))
    lines.append('observations:')
    lines.append(' '.join(obs))
    lines.append(' '.join(obs))
    for a1 in range(6):
        for a2 in range(6):
            for p1 in range(4):
                m1 = move(p1, a1)
                for p2 in range(4):
                    m2 = move(p2, a2)
                    for done in range(16):
                        nd = done
                        if a1 == 4:
                            nd |= 1 << p1
                        if a2 == 4:
                            nd |= 1 << p2
                        s = sidx(p1, p2, done)
                        for q1, pr1 in sorted(m1.items()):
                            for q2, pr2 in sorted(m2.items()):
                                lines.append(f'T: {acts[a1]} {acts[a2]} : {s} : '
                                             f'{sidx(q1, q2, nd)} : {fmt(pr1 * pr2)}')
    # noisy site sensing: correct site with p=0.8 tagged ok, else noise tag
    for p1 in range(4):
        for p2 in range(4):
            for done in range(16):
                s = sidx(p1, p2, done)
                for tag1 in range(2):
                    for tag2 in range(2):
                        pr = (0.8 if tag1 == 0 else 0.2) * (0.8 if tag2 == 0 else 0.2)
                        lines.append(f'O: * : {s} : {obs[p1 * 2 + tag1]} {obs[p2 * 2 + tag2]} : '
                                     f'{fmt(pr)}')
    for p1 in range(4):
        for p2 in range(4):
            for done in range(16):
                s = sidx(p1, p2, done)
                for a1 in range(6):
                    for a2 in range(6):
                        r = 0.0
                        if a1 == 4 and not (done >> p1) & 1:
                            r += 2.0 if p1 < 2 else 1.0
                        if a2 == 4 and not (done >> p2) & 1:
                            r += 2.0 if p2 < 2 else 1.0
                        if (a1 == 4 and a2 == 4 and p1 == p2 and p1 >= 2
                                and not (done >> p1) & 1):
                            r += 4.0
                        if r != 0.0:
                            lines.append(f'R: {acts[a1]} {acts[a2]} : {s} : * : * : {fmt(r)}')
    return '\n'.join(lines) + '\n'


if __name__ == '__main__':
    os.makedirs(OUT, exist_ok=True)
    for name, gen in [('recycling.dpomdp', gen_recycling),
                      ('grid3x3.dpomdp', gen_grid3x3),
                      ('boxpushing.dpomdp', gen_boxpushing),
                      ('marsrover.dpomdp', gen_marsrover)]:
        path = os.path.join(OUT, name)
        with open(path, 'w') as f:
            f.write(gen())
        print(f'wrote {path}')

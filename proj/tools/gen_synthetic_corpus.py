#!/usr/bin/env python3
"""Generate the synthetic separable corpus: MBI-style C stubs with headers
plus hand-shaped textual IR. Each error label is tied to instructions that
never occur in other labels; the shared base varies in instruction order,
constants and call order only.

usage: gen_synthetic_corpus.py OUT_DIR [PER_LABEL] [SEED]

Correct gets one sample per error-label sample so that the binary classes
are balanced.
"""
import os
import random
import sys

LABELS = ["Correct", "CallOrdering", "MessageRace", "ResourceLeak"]

DECLS = """declare i32 @MPI_Init(ptr, ptr)
declare i32 @MPI_Comm_rank(i32, ptr)
declare i32 @MPI_Send(ptr, i32, i32, i32, i32, i32)
declare i32 @MPI_Recv(ptr, i32, i32, i32, i32, i32, ptr)
declare i32 @MPI_Bcast(ptr, i32, i32, i32, i32)
declare i32 @MPI_Comm_dup(i32, ptr)
declare i32 @MPI_Finalize()
"""

HEADER = """/* ///////////////////////// The MPI Bugs Initiative ////////////////////////

  Origin: synthetic

  Description: {desc}

BEGIN_MBI_TESTS
  $ mpirun -np 2 ${{EXE}}
  | {verdict}
END_MBI_TESTS
//////////////////////       End of MBI headers        /////////////////// */

#include <mpi.h>

int main(int argc, char** argv) {{ return 0; }}
"""

DESCRIPTIONS = {
    "Correct": "Matched point-to-point exchange.",
    "CallOrdering": "Collective called by a subset of ranks.",
    "MessageRace": "Receive source chosen at run time.",
    "ResourceLeak": "Duplicated communicator never freed.",
}


def body(rng, label):
    lines = [
        "  %buf = alloca [16 x i32]",
        "  %rankp = alloca i32",
        "  %acc = alloca i32",
        "  %i0 = call i32 @MPI_Init(ptr %argc.addr, ptr %argv.addr)",
        "  %i1 = call i32 @MPI_Comm_rank(i32 1140850688, ptr %rankp)",
        "  %rank = load i32, ptr %rankp",
    ]
    # Fixed instruction multiset in random order with random constants, so
    # every label shares the same base tokens.
    value = "%rank"
    ops = ["add", "add", "mul", "mul", "sub", "store"]
    rng.shuffle(ops)
    for k, op in enumerate(ops):
        if op == "store":
            lines.append(f"  store i32 {value}, ptr %acc")
            lines.append(f"  %v{k} = load i32, ptr %acc")
        else:
            lines.append(f"  %v{k} = {op} i32 {value}, {rng.randint(1, 97)}")
        value = f"%v{k}"
    calls = ["send", "recv"]
    rng.shuffle(calls)
    for k, kind in enumerate(calls):
        tag = rng.randint(0, 9)
        if kind == "send":
            lines.append(f"  %s{k} = call i32 @MPI_Send(ptr %buf, i32 {value}, i32 1275069445, i32 1, i32 {tag}, i32 1140850688)")
        else:
            lines.append(f"  %s{k} = call i32 @MPI_Recv(ptr %buf, i32 {value}, i32 1275069445, i32 0, i32 {tag}, i32 1140850688, ptr null)")
    if label == "CallOrdering":
        lines.append("  %isroot = icmp eq i32 %rank, 0")
        lines.append("  br i1 %isroot, label %root, label %done")
        lines.append("root:")
        lines.append("  %bc = call i32 @MPI_Bcast(ptr %buf, i32 1, i32 1275069445, i32 0, i32 1140850688)")
        lines.append("  br label %done")
        lines.append("done:")
    elif label == "MessageRace":
        lines.append("  %odd = trunc i32 %rank to i1")
        lines.append("  %src = select i1 %odd, i32 -2, i32 0")
        lines.append("  %race = call i32 @MPI_Recv(ptr %buf, i32 1, i32 1275069445, i32 %src, i32 0, i32 1140850688, ptr null)")
    elif label == "ResourceLeak":
        lines.append("  %slot = getelementptr inbounds [16 x i32], ptr %buf, i64 0, i64 3")
        lines.append("  %dup = call i32 @MPI_Comm_dup(i32 1140850688, ptr %slot)")
    lines.append("  %f = call i32 @MPI_Finalize()")
    lines.append(f"  ret i32 {value}")
    return lines


def module(rng, label):
    text = DECLS + "\ndefine i32 @main(ptr %argc.addr, ptr %argv.addr) {\nentry:\n"
    text += "\n".join(body(rng, label)) + "\n}\n"
    return text


def main():
    out = sys.argv[1]
    per_label = int(sys.argv[2]) if len(sys.argv) > 2 else 16
    rng = random.Random(int(sys.argv[3]) if len(sys.argv) > 3 else 20240611)
    os.makedirs(out, exist_ok=True)
    for label in LABELS:
        count = per_label * (len(LABELS) - 1) if label == "Correct" else per_label
        for n in range(count):
            stem = os.path.join(out, f"{label.lower()}_{n:03d}")
            verdict = "OK" if label == "Correct" else f"ERROR: {label}"
            with open(stem + ".c", "w") as f:
                f.write(HEADER.format(desc=DESCRIPTIONS[label], verdict=verdict))
            with open(stem + ".ll", "w") as f:
                f.write(f"; synthetic {label} sample {n}\n" + module(rng, label))


if __name__ == "__main__":
    main()

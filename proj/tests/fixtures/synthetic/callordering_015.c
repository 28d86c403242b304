/* ///////////////////////// The MPI Bugs Initiative ////////////////////////

  Origin: synthetic

  Description: Collective called by a subset of ranks.

BEGIN_MBI_TESTS
  $ mpirun -np 2 ${EXE}
  | ERROR: CallOrdering
END_MBI_TESTS
//////////////////////       End of MBI headers        /////////////////// */

#include <mpi.h>

int main(int argc, char** argv) { return 0; }

/* ///////////////////////// The MPI Bugs Initiative ////////////////////////

  Origin: synthetic

  Description: Matched point-to-point exchange.

BEGIN_MBI_TESTS
  $ mpirun -np 2 ${EXE}
  | OK
END_MBI_TESTS
//////////////////////       End of MBI headers        /////////////////// */

#include <mpi.h>

int main(int argc, char** argv) { return 0; }

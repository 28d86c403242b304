/* ///////////////////////// The MPI Bugs Initiative ////////////////////////

  Origin: synthetic

  Description: Receive source chosen at run time.

BEGIN_MBI_TESTS
  $ mpirun -np 2 ${EXE}
  | ERROR: MessageRace
END_MBI_TESTS
//////////////////////       End of MBI headers        /////////////////// */

#include <mpi.h>

int main(int argc, char** argv) { return 0; }

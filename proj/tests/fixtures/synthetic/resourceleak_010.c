/* ///////////////////////// The MPI Bugs Initiative ////////////////////////

  Origin: synthetic

  Description: Duplicated communicator never freed.

BEGIN_MBI_TESTS
  $ mpirun -np 2 ${EXE}
  | ERROR: ResourceLeak
END_MBI_TESTS
//////////////////////       End of MBI headers        /////////////////// */

#include <mpi.h>

int main(int argc, char** argv) { return 0; }

/* ///////////////////////// The MPI Bugs Initiative ////////////////////////
BEGIN_MBI_TESTS
  $ mpirun -np 2 ${EXE}
  | ERROR: CallMatching
END_MBI_TESTS
*/
int main(void) { return 0; }

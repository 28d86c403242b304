#include <mpi.h>
#include <stdio.h>
#include "mpitest.h"
int main(int argc, char** argv) { return 0; }

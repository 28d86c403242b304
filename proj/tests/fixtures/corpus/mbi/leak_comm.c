// MBI header in line comments
// | ERROR: ResourceLeak
int main(void) { return 0; }

from andham.cli import main

main()

from bridgesim.cli.main import main

main()

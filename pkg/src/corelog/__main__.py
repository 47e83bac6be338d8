from corelog.cli import main

raise SystemExit(main())
